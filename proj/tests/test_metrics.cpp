// Copyright (c) 2026, The modbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "modbench/metrics.hpp"
#include "modbench/verify.hpp"

using namespace modbench;
using Catch::Matchers::WithinAbs;

namespace {

Tensor perm_mix(const std::vector<int>& perm, double w) {
    const std::size_t R = perm.size();
    Tensor a({R, R}, (1.0 - w) / R);
    for (std::size_t r = 0; r < R; ++r) a.at(r, perm[r]) += w;
    return a;
}

Tensor as_joint(const Tensor& A) {
    Tensor j = A;
    for (double& v : j.values()) v /= static_cast<double>(A.dim(0));
    return j;
}

double brute_cost(const Tensor& cost) {
    std::vector<int> p(cost.dim(0));
    std::iota(p.begin(), p.end(), 0);
    double best = 1e300;
    do {
        double s = 0.0;
        for (std::size_t r = 0; r < p.size(); ++r) s += cost.at(r, p[r]);
        best = std::min(best, s);
    } while (std::next_permutation(p.begin(), p.end()));
    return best;
}

}  // namespace

TEST_CASE("collapse examples") {
    const std::vector<double> uniform4(4, 0.25);
    CHECK(collapse_avg(uniform4, 4) == 0.0);
    CHECK(collapse_worst(uniform4, 4) == 0.0);
    CHECK(collapse_avg(std::vector<double>{1.0, 0.0}, 2) == 1.0);
    CHECK(collapse_worst(std::vector<double>{1.0, 0.0}, 2) == 1.0);
    CHECK_THAT(collapse_avg(std::vector<double>{0.5, 0.25, 0.25, 0.0}, 4), WithinAbs(1.0 / 3, 1e-15));
    CHECK_THAT(collapse_worst(std::vector<double>{0.4, 0.25, 0.25, 0.1}, 4), WithinAbs(0.6, 1e-15));
    CHECK(collapse_worst(std::vector<double>{0.5, 0.25, 0.25, 0.0}, 4) == 1.0);
    CHECK_THROWS_AS(collapse_avg(std::vector<double>{1.0}, 1), Error);
    CHECK_THROWS_AS(collapse_avg(uniform4, 3), Error);
}

TEST_CASE("Hungarian solver") {
    const Tensor cost = Tensor::matrix(3, 3, {4, 1, 3, 2, 0, 5, 3, 2, 2});
    CHECK(hungarian(cost) == std::vector<int>{1, 0, 2});
    Rng rng(3);
    for (std::size_t n : {1u, 2u, 4u, 6u}) {
        for (int rep = 0; rep < 20; ++rep) {
            Tensor c({n, n});
            for (double& v : c.values()) v = uniform(rng, 0.0, 1.0);
            const auto a = hungarian(c);
            double s = 0.0;
            for (std::size_t r = 0; r < n; ++r) s += c.at(r, a[r]);
            CHECK_THAT(s, WithinAbs(brute_cost(c), 1e-12));
        }
    }
    CHECK_THROWS_AS(hungarian(Tensor({2, 3})), Error);
}

TEST_CASE("alignment closed forms") {
    for (std::size_t R : {2u, 3u, 8u}) {
        CHECK_THAT(alignment(Tensor({R, R}, 1.0 / R)), WithinAbs((R - 1.0) / R, 1e-12));
        std::vector<int> perm(R);
        std::iota(perm.rbegin(), perm.rend(), 0);
        CHECK(alignment(perm_mix(perm, 1.0)) == 0.0);
        CHECK_THAT(alignment(perm_mix(perm, 0.9)), WithinAbs(0.1 * (R - 1.0) / R, 1e-12));
    }
}

TEST_CASE("inverse mutual information closed forms") {
    for (std::size_t R : {2u, 4u, 16u}) {
        std::vector<int> perm(R);
        std::iota(perm.begin(), perm.end(), 0);
        std::rotate(perm.begin(), perm.begin() + 1, perm.end());
        CHECK_THAT(inverse_mutual_information(as_joint(perm_mix(perm, 1.0))), WithinAbs(0.0, 1e-12));
        CHECK_THAT(inverse_mutual_information(as_joint(Tensor({R, R}, 1.0 / R))), WithinAbs(1.0, 1e-12));
        const double a = 0.9 + 0.1 / R, b = 0.1 / R;
        const double h_cond = -(a * std::log(a) + (R - 1.0) * b * std::log(b));
        CHECK_THAT(inverse_mutual_information(as_joint(perm_mix(perm, 0.9))),
                   WithinAbs(h_cond / std::log(static_cast<double>(R)), 1e-12));
    }
    CHECK_THROWS_AS(inverse_mutual_information(Tensor({1, 1}, 1.0)), Error);
}

TEST_CASE("metrics are invariant to relabeling modules") {
    Rng rng(8);
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t R = 5;
        const Tensor A = random_row_stochastic(rng, R);
        std::vector<int> perm(R);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        Tensor B({R, R});
        for (std::size_t r = 0; r < R; ++r) {
            for (std::size_t m = 0; m < R; ++m) B.at(r, perm[m]) = A.at(r, m);
        }
        CHECK_THAT(alignment(B), WithinAbs(alignment(A), 1e-12));
        CHECK_THAT(inverse_mutual_information(as_joint(B)), WithinAbs(inverse_mutual_information(as_joint(A)), 1e-12));
        CHECK(alignment(A) >= 0.0);
        CHECK(alignment(A) <= 1.0);
    }
}

TEST_CASE("adaptation on simulated gates") {
    const std::size_t draws = 20000;
    SECTION("gate that always picks module 0") {
        const double s = adaptation(2, draws, 1.0, 1, [](const std::vector<double>&, std::uint64_t) {
            return std::vector<double>{1.0, 0.0};
        });
        // 2·E[min(U, 1 − U)] = 1/2
        CHECK_THAT(s, WithinAbs(0.5, 0.01));
    }
    SECTION("uniform gate") {
        const double s = adaptation(2, draws, 1.0, 2, [](const std::vector<double>&, std::uint64_t) {
            return std::vector<double>{0.5, 0.5};
        });
        CHECK_THAT(s, WithinAbs(0.5, 0.01));
    }
    SECTION("gate that follows the rule law up to relabeling") {
        const double s = adaptation(4, 200, 1.0, 3, [](const std::vector<double>& p, std::uint64_t) {
            return std::vector<double>(p.rbegin(), p.rend());
        });
        CHECK_THAT(s, WithinAbs(0.0, 1e-15));
    }
    CHECK_THROWS_AS(adaptation(2, 0, 1.0, 1, [](const std::vector<double>& p, std::uint64_t) { return p; }), Error);
}

TEST_CASE("activation statistics") {
    ActivationStats s(3);
    CHECK_THROWS_AS(s.joint_distribution(), Error);
    const Tensor rows = Tensor::matrix(4, 3, {1, 0, 0, 0.5, 0.5, 0, 0, 0, 1, 0, 0.2, 0.8});
    s.add_rows(rows, std::vector<int>{0, 0, 2, 2});
    const Tensor A = s.activation_matrix();
    for (std::size_t r = 0; r < 3; ++r) {
        double sum = 0.0;
        for (std::size_t m = 0; m < 3; ++m) sum += A.at(r, m);
        CHECK_THAT(sum, WithinAbs(1.0, 1e-15));
    }
    CHECK(A.at(0, 0) == 0.75);
    CHECK(A.at(1, 1) == 1.0 / 3);  // unseen rule
    CHECK(A.at(2, 2) == 0.9);
    const auto em = empirical_marginal(s);
    CHECK_THAT(em[0], WithinAbs(1.5 / 4, 1e-15));
    const auto m = marginal(s);
    CHECK_THAT(m[0], WithinAbs((0.75 + 1.0 / 3) / 3, 1e-15));
    CHECK_THROWS_AS(s.add(3, std::vector<double>{1, 0, 0}), Error);
    CHECK_THROWS_AS(s.add(0, std::vector<double>{1, 0}), Error);

    ActivationStats hard(3);
    hard.add_rows(rows, std::vector<int>{0, 0, 2, 2}, true);
    CHECK(hard.activation_matrix().at(0, 0) == 1.0);  // tie 0.5/0.5 goes to module 0
}

TEST_CASE("metric report and CSV") {
    ActivationStats s(2);
    s.add(0, std::vector<double>{1.0, 0.0});
    s.add(1, std::vector<double>{0.0, 1.0});
    MetricReport r = metric_report(s);
    CHECK(r.collapse_avg == 0.0);
    CHECK(r.alignment == 0.0);
    CHECK_THAT(r.inverse_mutual_information, WithinAbs(0.0, 1e-15));
    r.adaptation = 0.25;
    const MetricReport back = MetricReport::from_json(r.to_json());
    CHECK(back.adaptation == r.adaptation);
    CHECK(back.alignment == r.alignment);
    CHECK(activation_csv(s.activation_matrix()) == "rule,m0,m1\n0,1,0\n1,0,1\n");
}

TEST_CASE("ranking votes") {
    const std::vector<Level> four{Level::GtModular, Level::ModularOp, Level::Modular, Level::Monolithic};
    std::vector<PerformanceSample> s;
    auto put = [&](const std::string& g, std::vector<double> perf) {
        for (std::size_t i = 0; i < 4; ++i) s.push_back({g, four[i], perf[i]});
    };
    put("a", {0.1, 0.2, 0.3, 0.4});
    put("b", {0.5, 0.5, 0.6, 0.1});
    put("c", {0.5, 0.2, 0.2, 0.3});
    // seed averaging: GT (0.1 + 0.5)/2 loses to Modular 0.2
    put("d", {0.1, 0.9, 0.2, 0.9});
    put("d", {0.5, 0.9, 0.2, 0.9});
    // missing a level
    for (std::size_t i = 0; i < 3; ++i) s.push_back({"e", four[i], 0.0});
    // unequal seed counts
    put("f", {0.1, 0.1, 0.1, 0.1});
    s.push_back({"f", Level::Modular, 0.1});

    const VoteTable t = ranking_votes(s, four);
    CHECK(t.wins.at(Level::GtModular) == 1);
    CHECK(t.wins.at(Level::ModularOp) == 1);
    CHECK(t.wins.at(Level::Modular) == 1);
    CHECK(t.wins.at(Level::Monolithic) == 1);
    CHECK(t.groups == 4);
    CHECK(t.total_votes() == 4);
    CHECK(t.ties == 1);
    CHECK(t.skipped == std::vector<std::string>{"e", "f"});

    const std::vector<Level> two{Level::Modular, Level::Monolithic};
    const VoteTable u = ranking_votes(s, two);
    CHECK(u.wins.size() == 2);
    CHECK(u.wins.at(Level::Modular) == 3);  // a, c, d; e has no Monolithic
    CHECK(u.wins.at(Level::Monolithic) == 1);
}
