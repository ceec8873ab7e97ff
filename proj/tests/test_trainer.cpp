// Copyright (c) 2026, The modbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

#include "modbench/trainer.hpp"

using namespace modbench;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

double loss_of(Mode mode, std::vector<double> pred, const std::vector<double>& labels) {
    Tape t;
    const std::size_t n = pred.size();
    return loss(mode, t.input(Tensor({n, 1}, std::move(pred))), labels).value()[0];
}

std::vector<Tensor> snapshot(Model& m) {
    std::vector<Tensor> out;
    for (Parameter* p : m.parameter_ptrs()) out.push_back(p->value);
    return out;
}

TrainConfig quick(std::size_t iterations) {
    TrainConfig c;
    c.iterations = iterations;
    c.batch_size = 32;
    c.eval_every = iterations;
    c.eval_samples = 200;
    return c;
}

double median(std::vector<double> v) {
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    return v[v.size() / 2];
}

}  // namespace

TEST_CASE("loss examples") {
    CHECK(loss_of(Mode::Regression, {1.0, -2.0}, {1.0, -2.0}) == 0.0);
    CHECK(loss_of(Mode::Regression, {2.0}, {0.5}) == 1.5);
    CHECK_THAT(loss_of(Mode::Classification, {0.0, 0.0}, {1.0, 0.0}), WithinAbs(std::log(2.0), 1e-15));
    // No overflow at extreme logits.
    CHECK_THAT(loss_of(Mode::Classification, {1000.0}, {1.0}), WithinAbs(0.0, 1e-15));
    CHECK_THAT(loss_of(Mode::Classification, {-1000.0}, {1.0}), WithinAbs(1000.0, 1e-9));
    CHECK_THROWS_AS(loss_of(Mode::Regression, {1.0}, {1.0, 2.0}), Error);
    CHECK_THROWS_AS(loss_of(Mode::Regression, {std::nan("")}, {1.0}), Error);
}

TEST_CASE("Adam matches the closed-form update") {
    Parameter p(Tensor::vector({1.0, -1.0}));
    Parameter* ps[] = {&p};
    const AdamConfig cfg{0.1};
    p.grad = Tensor::vector({2.0, -0.5});
    adam_step(ps, cfg);
    // First step: m̂ = g, v̂ = g², so w -= lr·g/(|g| + ε).
    CHECK_THAT(p.value[0], WithinAbs(1.0 - 0.1 * 2.0 / (2.0 + 1e-8), 1e-15));
    CHECK_THAT(p.value[1], WithinAbs(-1.0 + 0.1 * 0.5 / (0.5 + 1e-8), 1e-15));

    p.grad = Tensor::vector({1.0, 0.0});
    const double w0 = p.value[0];
    adam_step(ps, cfg);
    const double m = 0.9 * 0.1 * 2.0 + 0.1 * 1.0, v = 0.999 * 0.001 * 4.0 + 0.001 * 1.0;
    const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
    CHECK_THAT(p.value[0], WithinAbs(w0 - 0.1 * mh / (std::sqrt(vh) + 1e-8), 1e-14));
    CHECK(p.step == 2);
}

TEST_CASE("Adam with zero gradient leaves parameters unchanged") {
    Parameter p(Tensor::vector({0.3, 0.7}));
    Parameter* ps[] = {&p};
    for (int i = 0; i < 5; ++i) adam_step(ps, AdamConfig{});
    CHECK(p.value == Tensor::vector({0.3, 0.7}));
}

TEST_CASE("gradient clipping") {
    Parameter a(Tensor::vector({0.0})), b(Tensor::vector({0.0}));
    Parameter* ps[] = {&a, &b};
    a.grad = Tensor::vector({3.0});
    b.grad = Tensor::vector({4.0});
    CHECK(clip_gradient_norm(ps, 10.0) == 1.0);
    CHECK(a.grad[0] == 3.0);
    CHECK_THAT(clip_gradient_norm(ps, 1.0), WithinAbs(0.2, 1e-15));
    CHECK_THAT(a.grad[0], WithinAbs(0.6, 1e-15));
    CHECK_THAT(b.grad[0], WithinAbs(0.8, 1e-15));
    CHECK_THROWS_AS(clip_gradient_norm(ps, 0.0), Error);
}

TEST_CASE("training is deterministic") {
    const TaskSpec task = sample_task(Family::Mlp, 2, 4);
    const ModelConfig cfg = make_config(Level::Modular, task, 3000);
    Model a = Model::build(cfg, 7), b = Model::build(cfg, 7);
    const TrainLog la = train(a, task, quick(30), 99);
    const TrainLog lb = train(b, task, quick(30), 99);
    CHECK(la.losses == lb.losses);
    REQUIRE(la.checkpoints.size() == 1);
    CHECK(la.checkpoints[0].evals == lb.checkpoints[0].evals);
    CHECK(snapshot(a) == snapshot(b));
    Model c = Model::build(cfg, 7);
    CHECK(train(c, task, quick(30), 100).losses != la.losses);
}

TEST_CASE("zero learning rate keeps parameters") {
    const TaskSpec task = sample_task(Family::Rnn, 2, 4);
    Model m = Model::build(make_config(Level::ModularOp, task, 20000), 7);
    const auto before = snapshot(m);
    TrainConfig c = quick(3);
    c.learning_rate = 0.0;
    c.clip_norm = 1.0;
    CHECK(train(m, task, c, 1).ok());
    CHECK(snapshot(m) == before);
}

TEST_CASE("train rejects invalid configurations") {
    const TaskSpec task = sample_task(Family::Mlp, 2, 4);
    Model m = Model::build(make_config(Level::Modular, task, 3000), 7);
    TrainConfig c = quick(2);
    c.clip_norm = 1.0;
    CHECK_THROWS_AS(train(m, task, c, 1), Error);
    c = quick(2);
    c.shifts = {Shift::length(5)};
    CHECK_THROWS_AS(train(m, task, c, 1), Error);
    CHECK_THROWS_AS(train(m, sample_task(Family::Rnn, 2, 1), quick(2), 1), Error);
}

TEST_CASE("evaluate counts decision points and does not mutate the model") {
    const TaskSpec task = sample_task(Family::Mha, 2, 4);
    Model m = Model::build(make_config(Level::Modular, task, 20000), 7);
    const auto before = snapshot(m);
    const EvalResult r = evaluate(m, task, Mode::Classification, Shift::length(5), 7, 3, {}, 3);
    CHECK(r.records == 35);
    CHECK(r.stats.total() == 35.0);
    CHECK(r.performance >= 0.0);
    CHECK(r.performance <= 1.0);
    CHECK(snapshot(m) == before);
    CHECK(evaluate(m, task, Mode::Classification, Shift::length(5), 7, 3, {}, 3).performance == r.performance);
}

TEST_CASE("non-finite values end the run as diverged") {
    const TaskSpec task = sample_task(Family::Mlp, 2, 4);
    Model m = Model::build(make_config(Level::Monolithic, task, 3000), 7);
    m.decoder.second.bias.value[0] = std::numeric_limits<double>::quiet_NaN();
    const TrainLog log = train(m, task, quick(10), 1);
    CHECK(log.status == "diverged");
    CHECK(log.losses.empty());
    CHECK_FALSE(log.diagnostic.empty());
}

TEST_CASE("adaptation of a GT-Modular model is near zero") {
    const TaskSpec task = sample_task(Family::Mlp, 3, 4);
    const Model m = Model::build(make_config(Level::GtModular, task, 4000), 7);
    CHECK(adaptation(m, task, Mode::Regression, 20, 1.0, 4000, 5) < 0.05);
    const Model mono = Model::build(make_config(Level::Monolithic, task, 4000), 7);
    CHECK_THROWS_AS(adaptation(mono, task, Mode::Regression, 2, 1.0, 10, 5), Error);
}

TEST_CASE("loss decreases over training") {
    for (Level l : {Level::GtModular, Level::Modular, Level::Monolithic}) {
        const TaskSpec task = sample_task(Family::Mlp, 2, 12);
        Model m = Model::build(make_config(l, task, 3000), 3);
        TrainConfig c = quick(400);
        c.learning_rate = 1e-3;
        const TrainLog log = train(m, task, c, 5);
        REQUIRE(log.ok());
        const std::vector<double> head(log.losses.begin(), log.losses.begin() + 40);
        const std::vector<double> tail(log.losses.end() - 40, log.losses.end());
        CAPTURE(to_string(l));
        CHECK(median(tail) < 0.5 * median(head));
    }
}

TEST_CASE("GT-Modular pilot fits a two-rule MLP task") {
    const TaskSpec task = sample_task(Family::Mlp, 2, 1);
    const ModelConfig cfg = make_config(Level::GtModular, task, 10000);
    REQUIRE(cfg.hidden_width >= 32);
    Model m = Model::build(cfg, 2);
    TrainConfig c = TrainConfig::for_family(Family::Mlp, Mode::Regression);
    c.iterations = 5000;
    c.eval_every = 5000;
    c.eval_samples = 2000;
    const TrainLog log = train(m, task, c, 3);
    REQUIRE(log.ok());
    CHECK(loss_window_medians(log.losses).second < 0.05);
    CHECK(log.checkpoints.back().evals.at("id") < 0.05);
}
