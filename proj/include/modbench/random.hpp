// Copyright (c) 2026, The modbench Authors
// SPDX-License-Identifier: Apache-2.0
//
// Seed derivation and small sampling helpers.

#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>
#include <vector>

namespace modbench {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Order-sensitive hash of a list of integers; used to derive child seeds
/// from coordinates so that adding new coordinates never perturbs old ones.
inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
    std::uint64_t h = 0x6a09e667f3bcc908ULL;
    for (std::uint64_t p : parts) h = splitmix64(h ^ splitmix64(p));
    return h;
}

inline std::uint64_t hash_string(std::string_view s) {
    // FNV-1a
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline double normal(Rng& rng, double stddev = 1.0) {
    std::normal_distribution<double> d(0.0, stddev);
    return d(rng);
}

inline double uniform(Rng& rng, double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(rng);
}

inline int uniform_int(Rng& rng, int n) {
    std::uniform_int_distribution<int> d(0, n - 1);
    return d(rng);
}

/// Draws a point from the symmetric Dirichlet(alpha·1) distribution.
inline std::vector<double> dirichlet(Rng& rng, std::size_t k, double alpha) {
    std::gamma_distribution<double> g(alpha, 1.0);
    std::vector<double> p(k);
    double s = 0.0;
    for (double& v : p) {
        v = g(rng);
        s += v;
    }
    for (double& v : p) v /= s;
    return p;
}

/// Categorical draw from (not necessarily normalized) nonnegative weights.
inline int categorical(Rng& rng, const std::vector<double>& weights) {
    std::discrete_distribution<int> d(weights.begin(), weights.end());
    return d(rng);
}

}  // namespace modbench
