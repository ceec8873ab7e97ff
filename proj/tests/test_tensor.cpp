// Copyright (c) 2026, The modbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include "modbench/tensor.hpp"

using modbench::Error;
using modbench::Tensor;

TEST_CASE("tensor shape and values agree") {
    Tensor t({2, 3}, 1.5);
    CHECK(t.size() == 6);
    CHECK(t.rank() == 2);
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    for (double v : t.values()) CHECK(v == 1.5);
    CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), Error);
    CHECK_THROWS_AS(Tensor({2, 0}), Error);
    CHECK_THROWS_AS(Tensor(modbench::Shape{}), Error);
}

TEST_CASE("row-major indexing") {
    const Tensor m = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
    CHECK(m.at(0, 2) == 3);
    CHECK(m.at(1, 0) == 4);
    CHECK(m[4] == 5);
    const Tensor i = Tensor::identity(3);
    CHECK(i.at(1, 1) == 1.0);
    CHECK(i.at(1, 2) == 0.0);
}

TEST_CASE("reshape keeps data and checks element count") {
    const Tensor m = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
    const Tensor r = m.reshaped({3, 2});
    CHECK(r.values() == m.values());
    CHECK(r.dim(0) == 3);
    CHECK_THROWS_AS(m.reshaped({4, 2}), Error);
}
