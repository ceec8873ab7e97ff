// Copyright (c) 2026, The modbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "modbench/modelzoo.hpp"
#include "modbench/verify.hpp"

using namespace modbench;
using Catch::Matchers::WithinAbs;

namespace {

constexpr Family kFamilies[] = {Family::Mlp, Family::Mha, Family::Rnn};

std::size_t linear_count(std::size_t in, std::size_t out) { return in * out + out; }

// Hand count of an MLP-family model with one readout slot.
std::size_t mlp_count(Level level, std::size_t R, std::size_t H, std::size_t D) {
    const std::size_t E = 16, Ec = std::max<std::size_t>(16, R), O = 16;
    std::size_t n = linear_count(1, E) + linear_count(E, E) + linear_count(R, Ec) + linear_count(Ec, Ec);
    const std::size_t cells = level == Level::Monolithic ? 1 : R;
    std::size_t cell = linear_count(2 * E + Ec, H) + linear_count(H, H) + linear_count(H, O);
    if (level == Level::Modular) cell += linear_count(H, 1);
    n += cells * cell;
    if (level == Level::ModularOp) n += linear_count(Ec, std::max<std::size_t>(R, 8)) + linear_count(std::max<std::size_t>(R, 8), R);
    return n + linear_count(O, D) + linear_count(D, 1);
}

Model small_model(Level level, const TaskSpec& task, std::uint64_t seed, std::size_t capacity = 20000) {
    return Model::build(make_config(level, task, capacity), seed);
}

double max_abs_gap(const Tensor& a, const Tensor& b) {
    double g = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) g = std::max(g, std::fabs(a[i] - b[i]));
    return g;
}

}  // namespace

TEST_CASE("parameter count matches a hand count") {
    for (Level l : {Level::Monolithic, Level::Modular, Level::ModularOp, Level::GtModular, Level::RandomGate}) {
        for (std::size_t R : {2u, 8u, 32u}) {
            ModelConfig c;
            c.level = l;
            c.R = static_cast<int>(R);
            c.hidden_width = 24;
            c.decoder_width = 9;
            CAPTURE(to_string(l), R);
            CHECK(param_count(c) == mlp_count(l, R, 24, 9));
        }
    }
}

TEST_CASE("capacity matching") {
    for (Family f : kFamilies) {
        for (int R : {2, 8}) {
            const TaskSpec task = sample_task(f, R, 3);
            std::size_t prev_hidden = 0;
            for (std::size_t cap : {20000u, 40000u}) {
                for (Level l : {Level::Monolithic, Level::Modular, Level::ModularOp, Level::GtModular}) {
                    const ModelConfig c = make_config(l, task, cap);
                    const std::size_t n = param_count(c);
                    CAPTURE(to_string(f), R, cap, to_string(l), n);
                    CHECK(n <= cap);
                    CHECK(n >= 0.95 * cap);
                    if (l == Level::Monolithic) {
                        CHECK(c.hidden_width >= prev_hidden);
                        prev_hidden = c.hidden_width;
                    }
                }
            }
        }
    }
    CHECK_THROWS_AS(make_config(Level::Modular, sample_task(Family::Mlp, 32, 1), 500), Error);
}

TEST_CASE("activations lie on the simplex at every level") {
    for (Family f : kFamilies) {
        const TaskSpec task = sample_task(f, 3, 11);
        const Batch b = sample_batch(task, 6, Mode::Regression, Shift::in_distribution(), 2);
        for (Level l : kAllLevels) {
            const Model m = small_model(l, task, 5);
            Tape t;
            const ForwardOutput out = m.infer(t, b);
            CAPTURE(to_string(f), to_string(l));
            REQUIRE(out.activations.rows() == b.decision_points());
            REQUIRE(out.predictions.value().size() == b.decision_points());
            CHECK(out.rule_ids == b.rule_ids);
            CHECK(out.specialization_defined == (l != Level::Monolithic));
            for (std::size_t i = 0; i < out.activations.rows(); ++i) {
                double s = 0.0;
                for (std::size_t m2 = 0; m2 < 3; ++m2) {
                    const double p = out.activations.at(i, m2);
                    CHECK(p >= 0.0);
                    s += p;
                    if (l == Level::GtModular) CHECK(p == (static_cast<int>(m2) == b.rule_ids[i] ? 1.0 : 0.0));
                    if (l == Level::Monolithic) CHECK(p == 1.0 / 3);
                }
                CHECK_THAT(s, WithinAbs(1.0, 1e-12));
            }
        }
    }
}

TEST_CASE("ModularOp gate ignores x") {
    const TaskSpec task = sample_task(Family::Mlp, 4, 2);
    const Model m = small_model(Level::ModularOp, task, 3);
    Batch a = sample_batch(task, 50, Mode::Regression, Shift::in_distribution(), 1);
    Batch b = sample_batch(task, 50, Mode::Regression, Shift::variance_doubled(), 2);
    b.rule_ids = a.rule_ids;
    Tape t1, t2;
    const Tensor pa = m.infer(t1, a).activations;
    const Tensor pb = m.infer(t2, b).activations;
    CHECK(pa == pb);
}

TEST_CASE("Modular gate degenerates to uniform") {
    const TaskSpec task = sample_task(Family::Mlp, 4, 2);
    const Batch b = sample_batch(task, 20, Mode::Regression, Shift::in_distribution(), 1);
    SECTION("zero score heads") {
        Model m = small_model(Level::Modular, task, 3);
        for (Cell& c : m.cells) {
            c.scores[0].weight.value.fill(0.0);
            c.scores[0].bias.value.fill(0.0);
        }
        Tape t;
        const Tensor acts = m.infer(t, b).activations;
        for (double p : acts.values()) CHECK_THAT(p, WithinAbs(0.25, 1e-15));
    }
    SECTION("identical modules") {
        Model m = small_model(Level::Modular, task, 3);
        for (Cell& c : m.cells) c = m.cells[0];
        Tape t;
        const Tensor acts = m.infer(t, b).activations;
        for (double p : acts.values()) CHECK_THAT(p, WithinAbs(0.25, 1e-15));
    }
}

TEST_CASE("GT gate routes gradient to the selected module only") {
    const TaskSpec task = sample_task(Family::Mlp, 3, 2);
    Model m = small_model(Level::GtModular, task, 3);
    Batch b = sample_batch(task, 16, Mode::Regression, Shift::in_distribution(), 1);
    std::fill(b.rule_ids.begin(), b.rule_ids.end(), 1);
    Tape t;
    t.backward(ops::sum(m.forward(t, b).predictions));
    auto norm = [](const Cell& c) {
        double s = 0.0;
        for (const Linear& l : c.layers) {
            for (double g : l.weight.grad.values()) s += g * g;
        }
        for (double g : c.outs[0].weight.grad.values()) s += g * g;
        return s;
    };
    CHECK(norm(m.cells[0]) == 0.0);
    CHECK(norm(m.cells[2]) == 0.0);
    CHECK(norm(m.cells[1]) > 0.0);
}

TEST_CASE("sequence families emit one record per token or step") {
    for (Family f : {Family::Mha, Family::Rnn}) {
        const TaskSpec task = sample_task(f, 2, 4);
        const Batch b = sample_batch(task, 3, Mode::Regression, Shift::length(5), 1);
        const Model m = small_model(Level::Modular, task, 1);
        Tape t;
        CHECK(m.infer(t, b).activations.rows() == 15);
    }
}

TEST_CASE("MHA head layout") {
    const TaskSpec task = sample_task(Family::Mha, 4, 4);
    const Model mod = small_model(Level::Modular, task, 1, 40000);
    const Model mono = small_model(Level::Monolithic, task, 1, 40000);
    REQUIRE(mod.cells.size() == 4);
    for (const Cell& c : mod.cells) CHECK(c.heads.size() == mod.config.heads_per_module);
    REQUIRE(mono.cells.size() == 1);
    CHECK(mono.cells[0].heads.size() == 4 * mono.config.heads_per_module);
}

TEST_CASE("level reductions compute the same function") {
    for (Family f : kFamilies) {
        const TaskSpec task = sample_task(f, 2, 21);
        const Model gt = small_model(Level::GtModular, task, 8);
        const Model op = reduce_level(gt);
        const Model modular = reduce_level(op);
        const Model mono = reduce_level(modular);
        CHECK(op.config.level == Level::ModularOp);
        CHECK(modular.config.level == Level::Modular);
        CHECK(mono.config.level == Level::Monolithic);
        CAPTURE(to_string(f));
        CHECK(witness_gap(gt, op, task, 200, 1) < 1e-5);
        CHECK(witness_gap(op, modular, task, 200, 2) < 1e-5);
        CHECK(witness_gap(modular, mono, task, 200, 3) < 1e-5);
        CHECK(witness_gap(gt, mono, task, 200, 4) < 1e-5);
        // The soft gate matches one-hot to within e^-gap.
        const Batch b = sample_batch(task, 50, Mode::Regression, Shift::in_distribution(), 5);
        Tape t;
        const Tensor p = op.infer(t, b).activations;
        for (std::size_t i = 0; i < p.rows(); ++i) CHECK(p.at(i, b.rule_ids[i]) > 1.0 - 1e-15);
        CHECK_THROWS_AS(reduce_level(mono), Error);
    }
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    const TaskSpec task = sample_task(Family::Rnn, 2, 6);
    Model m = small_model(Level::ModularOp, task, 2);
    const auto dir = std::filesystem::temp_directory_path() / "modbench_ckpt_test";
    std::filesystem::remove_all(dir);
    save_checkpoint(m, dir);
    Model back = load_checkpoint(dir);
    auto a = m.parameters();
    auto b = back.parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].name == b[i].name);
        CHECK(a[i].param->value == b[i].param->value);
    }
    const Batch batch = sample_batch(task, 4, Mode::Regression, Shift::in_distribution(), 3);
    Tape t1, t2;
    CHECK(m.infer(t1, batch).predictions.value() == back.infer(t2, batch).predictions.value());
    std::filesystem::remove_all(dir);
}

TEST_CASE("model construction contracts") {
    const TaskSpec mlp = sample_task(Family::Mlp, 2, 1);
    const Model a = small_model(Level::Modular, mlp, 9), b = small_model(Level::Modular, mlp, 9);
    Tape t1, t2;
    const Batch batch = sample_batch(mlp, 8, Mode::Regression, Shift::in_distribution(), 1);
    CHECK(a.infer(t1, batch).predictions.value() == b.infer(t2, batch).predictions.value());

    const Batch rnn = sample_batch(sample_task(Family::Rnn, 2, 1), 2, Mode::Regression, Shift::in_distribution(), 1);
    Tape t3;
    CHECK_THROWS_AS(a.infer(t3, rnn), Error);

    ModelConfig bad = a.config;
    bad.readout_slots = 2;
    CHECK_THROWS_AS(Model::allocate(bad), Error);
}

TEST_CASE("monolithic placeholder and untrained outputs are finite") {
    const TaskSpec task = sample_task(Family::Mha, 2, 1);
    const Model m = small_model(Level::Monolithic, task, 1);
    const Batch b = sample_batch(task, 4, Mode::Regression, Shift::in_distribution(), 1);
    Tape t;
    const ForwardOutput out = m.infer(t, b);
    CHECK_FALSE(out.specialization_defined);
    for (double y : out.predictions.value().values()) CHECK(std::isfinite(y));
    CHECK(max_abs_gap(out.activations, Tensor(out.activations.shape(), 0.5)) == 0.0);
}
