// Copyright (c) 2026, The modbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "modbench/autodiff.hpp"
#include "modbench/harness.hpp"
#include "modbench/levels.hpp"
#include "modbench/metrics.hpp"
#include "modbench/modelzoo.hpp"
#include "modbench/nn.hpp"
#include "modbench/random.hpp"
#include "modbench/rulegen.hpp"
#include "modbench/tensor.hpp"
#include "modbench/trainer.hpp"
#include "modbench/verify.hpp"
