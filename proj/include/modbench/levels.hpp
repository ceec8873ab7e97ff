// Copyright (c) 2026, The modbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "modbench/tensor.hpp"

namespace modbench {

/// Model levels, strongest inductive bias first.
enum class Level { GtModular, ModularOp, Modular, Monolithic, RandomGate };

inline constexpr Level kAllLevels[] = {Level::GtModular, Level::ModularOp, Level::Modular,
                                       Level::Monolithic, Level::RandomGate};

inline std::string to_string(Level l) {
    switch (l) {
        case Level::Monolithic: return "Monolithic";
        case Level::Modular: return "Modular";
        case Level::ModularOp: return "ModularOp";
        case Level::GtModular: return "GtModular";
        case Level::RandomGate: return "RandomGate";
    }
    return "?";
}

inline Level parse_level(const std::string& s) {
    for (Level l : kAllLevels) {
        if (to_string(l) == s) return l;
    }
    throw Error("unknown level '" + s +
                "' (expected Monolithic, Modular, ModularOp, GtModular or RandomGate)");
}

}  // namespace modbench
