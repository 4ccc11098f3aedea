// Forward-value checks of the tensor ops against the naive-loop oracles,
// randomized over shapes, plus validation error cases. All oracle
// comparisons run at f64 with a 1e-12 absolute tolerance.

#include <doctest.h>

#include <stdexcept>
#include <vector>

#include "oracles.h"
#include "prnet/autograd.hpp"
#include "prnet/ops.hpp"
#include "prnet/rng.hpp"
#include "prnet/tensor.hpp"
#include "test_util.h"

using prnet::DType;
using prnet::Graph;
using prnet::Shape;
using prnet::Tensor;
using testutil::max_abs_diff;
using testutil::rand_extent;
using testutil::rand_tensor;

namespace {
constexpr double kTol = 1e-12;
}

TEST_SUITE("tensor_ops") {

TEST_CASE("conv2d matches the naive loop on 60 random cases") {
    prnet::rng::Engine g(11);
    for (int it = 0; it < 60; ++it) {
        const std::int64_t k = 1 + 2 * rand_extent(g, 0, 2);  // 1, 3, 5
        const bool same_pad = (it % 2 == 0);
        const std::int64_t pad = same_pad ? (k - 1) / 2 : 0;
        // Valid output needs h,w >= k when unpadded.
        const auto h = rand_extent(g, same_pad ? 1 : k, k + 8);
        const auto w = rand_extent(g, same_pad ? 1 : k, k + 8);
        const auto cin = rand_extent(g, 1, 6);
        const auto cout = rand_extent(g, 1, 6);
        const bool with_bias = (it % 3) != 0;

        const Tensor x = rand_tensor({h, w, cin}, g);
        const Tensor ker = rand_tensor({k, k, cin, cout}, g);
        const Tensor b = with_bias ? rand_tensor({cout}, g) : Tensor();

        Graph graph(false);
        const Tensor out = with_bias ? prnet::ops::conv2d(graph, x, ker, b, pad)
                                     : prnet::ops::conv2d(graph, x, ker, pad);
        const oracle::Vec want =
            oracle::conv2d(x.to_vector(), h, w, cin, ker.to_vector(), k, cout,
                           with_bias ? b.to_vector() : oracle::Vec{}, pad);
        CHECK(out.shape() == Shape{h + 2 * pad - k + 1, w + 2 * pad - k + 1, cout});
        CHECK(max_abs_diff(out, want) < kTol);
    }
}

TEST_CASE("linear matches the naive loop on 60 random cases") {
    prnet::rng::Engine g(12);
    for (int it = 0; it < 60; ++it) {
        const auto din = rand_extent(g, 1, 10);
        const auto dout = rand_extent(g, 1, 10);
        const bool with_bias = (it % 2) == 0;

        // Alternate between 1-, 2- and 3-axis batch shapes.
        Shape in_shape;
        if (it % 3 == 0) {
            in_shape = {din};
        } else if (it % 3 == 1) {
            in_shape = {rand_extent(g, 1, 7), din};
        } else {
            in_shape = {rand_extent(g, 1, 4), rand_extent(g, 1, 4), din};
        }
        const std::int64_t rows = prnet::shape_numel(in_shape) / din;

        const Tensor x = rand_tensor(in_shape, g);
        const Tensor w = rand_tensor({din, dout}, g);
        const Tensor b = with_bias ? rand_tensor({dout}, g) : Tensor();

        Graph graph(false);
        const Tensor out = with_bias ? prnet::ops::linear(graph, x, w, b)
                                     : prnet::ops::linear(graph, x, w);
        const oracle::Vec want = oracle::linear(x.to_vector(), rows, din, w.to_vector(), dout,
                                                with_bias ? b.to_vector() : oracle::Vec{});
        Shape want_shape = in_shape;
        want_shape.back() = dout;
        CHECK(out.shape() == want_shape);
        CHECK(max_abs_diff(out, want) < kTol);
    }
}

TEST_CASE("adaptive_max_pool2d matches the naive loop on 60 random cases") {
    prnet::rng::Engine g(13);
    for (int it = 0; it < 60; ++it) {
        const auto h = rand_extent(g, 1, 12);
        const auto w = rand_extent(g, 1, 12);
        const auto c = rand_extent(g, 1, 6);
        const auto oh = rand_extent(g, 1, h);
        const auto ow = rand_extent(g, 1, w);

        const Tensor x = rand_tensor({h, w, c}, g);
        Graph graph(false);
        const Tensor out = prnet::ops::adaptive_max_pool2d(graph, x, oh, ow);
        const oracle::Vec want = oracle::adaptive_max_pool2d(x.to_vector(), h, w, c, oh, ow);
        CHECK(out.shape() == Shape{oh, ow, c});
        CHECK(max_abs_diff(out, want) < kTol);
    }
}

TEST_CASE("global_avg_pool matches the naive loop on 60 random cases") {
    prnet::rng::Engine g(14);
    for (int it = 0; it < 60; ++it) {
        const auto h = rand_extent(g, 1, 12);
        const auto w = rand_extent(g, 1, 12);
        const auto c = rand_extent(g, 1, 8);
        const Tensor x = rand_tensor({h, w, c}, g);
        Graph graph(false);
        const Tensor out = prnet::ops::global_avg_pool(graph, x);
        CHECK(out.shape() == Shape{c});
        CHECK(max_abs_diff(out, oracle::global_avg_pool(x.to_vector(), h, w, c)) < kTol);
    }
}

TEST_CASE("elementwise broadcasting matches tile-then-apply on 90 random cases") {
    prnet::rng::Engine g(15);
    for (int it = 0; it < 90; ++it) {
        // Draw a full shape, then derive a broadcast operand by dropping
        // leading axes and/or collapsing random axes to extent 1.
        Shape sa;
        const auto nd = rand_extent(g, 1, 4);
        for (std::int64_t i = 0; i < nd; ++i) sa.push_back(rand_extent(g, 1, 5));

        Shape sb = sa;
        const auto drop = rand_extent(g, 0, nd - 1);
        sb.erase(sb.begin(), sb.begin() + drop);
        for (auto& d : sb) {
            if (prnet::rng::uniform_unit(g) < 0.4) d = 1;
        }

        const auto kind = static_cast<prnet::ops::EwiseKind>(it % 3);
        const auto okind = static_cast<oracle::Ewise>(it % 3);

        const Tensor a = rand_tensor(sa, g);
        const Tensor b = rand_tensor(sb, g);

        Graph graph(false);
        const Tensor out = prnet::ops::ewise(graph, kind, a, b);
        const oracle::Vec want =
            oracle::ewise(okind, a.to_vector(), oracle::tile_to(b.to_vector(), sb, sa));
        CHECK(out.shape() == sa);
        CHECK(max_abs_diff(out, want) < kTol);
    }
}

TEST_CASE("broadcast_shape agrees with trailing alignment") {
    using prnet::ops::broadcast_shape;
    CHECK(broadcast_shape({2, 3}, {3}) == Shape{2, 3});
    CHECK(broadcast_shape({4, 1, 5}, {2, 5}) == Shape{4, 2, 5});
    CHECK(broadcast_shape({3}, {2, 3}) == Shape{2, 3});
    CHECK_THROWS_AS(broadcast_shape({2, 3}, {4}), std::invalid_argument);
}

TEST_CASE("concat joins along any axis") {
    prnet::rng::Engine g(16);
    for (int it = 0; it < 20; ++it) {
        const auto a0 = rand_extent(g, 1, 4);
        const auto a1 = rand_extent(g, 1, 4);
        const auto b_ax = rand_extent(g, 1, 4);
        const auto axis = rand_extent(g, 0, 1);

        Shape sa = {a0, a1};
        Shape sb = sa;
        sb[axis] = b_ax;
        const Tensor a = rand_tensor(sa, g);
        const Tensor b = rand_tensor(sb, g);

        Graph graph(false);
        const Tensor out = prnet::ops::concat(graph, a, b, axis);
        Shape want_shape = sa;
        want_shape[axis] += b_ax;
        CHECK(out.shape() == want_shape);

        // Every output element must equal the corresponding input element.
        for (std::int64_t i = 0; i < want_shape[0]; ++i) {
            for (std::int64_t j = 0; j < want_shape[1]; ++j) {
                const double got = out.item_at(i * want_shape[1] + j);
                double want = 0.0;
                if (axis == 0) {
                    want = i < a0 ? a.item_at(i * a1 + j) : b.item_at((i - a0) * a1 + j);
                } else {
                    want = j < a1 ? a.item_at(i * a1 + j) : b.item_at(i * b_ax + (j - a1));
                }
                CHECK(got == want);
            }
        }
    }
}

TEST_CASE("permute relocates elements exactly") {
    prnet::rng::Engine g(17);
    const Tensor x = rand_tensor({3, 4, 5}, g);
    Graph graph(false);
    const Tensor y = prnet::ops::permute(graph, x, {2, 0, 1});
    CHECK(y.shape() == Shape{5, 3, 4});
    for (std::int64_t i = 0; i < 3; ++i) {
        for (std::int64_t j = 0; j < 4; ++j) {
            for (std::int64_t k = 0; k < 5; ++k) {
                CHECK(y.item_at((k * 3 + i) * 4 + j) == x.item_at((i * 4 + j) * 5 + k));
            }
        }
    }
}

TEST_CASE("reshape preserves the flat order") {
    prnet::rng::Engine g(18);
    const Tensor x = rand_tensor({4, 6}, g);
    Graph graph(false);
    const Tensor y = prnet::ops::reshape(graph, x, {2, 3, 4});
    CHECK(y.shape() == Shape{2, 3, 4});
    CHECK(max_abs_diff(y, x.to_vector()) == 0.0);
    CHECK_THROWS_AS(prnet::ops::reshape(graph, x, {5, 5}), std::invalid_argument);
}

TEST_CASE("l1_loss and sum match accumulation loops") {
    prnet::rng::Engine g(19);
    for (int it = 0; it < 20; ++it) {
        const auto n0 = rand_extent(g, 1, 6);
        const auto n1 = rand_extent(g, 1, 6);
        const Tensor a = rand_tensor({n0, n1}, g);
        const Tensor b = rand_tensor({n0, n1}, g);
        Graph graph(false);

        const double want_sum_loss = oracle::l1(a.to_vector(), b.to_vector());
        const Tensor lsum = prnet::ops::l1_loss(graph, a, b, prnet::ops::Reduction::sum);
        const Tensor lmean = prnet::ops::l1_loss(graph, a, b, prnet::ops::Reduction::mean);
        CHECK(lsum.shape() == Shape{1});
        CHECK(std::fabs(lsum.item() - want_sum_loss) < kTol);
        CHECK(std::fabs(lmean.item() - want_sum_loss / static_cast<double>(n0 * n1)) < kTol);

        double want_total = 0.0;
        for (const double v : a.to_vector()) want_total += v;
        const Tensor s = prnet::ops::sum(graph, a);
        CHECK(std::fabs(s.item() - want_total) < kTol);
    }
}

TEST_CASE("validation rejects malformed inputs") {
    prnet::rng::Engine g(20);
    Graph graph(false);
    const Tensor x = rand_tensor({4, 4, 2}, g);
    const Tensor ker_even = rand_tensor({2, 2, 2, 3}, g);
    CHECK_THROWS_AS(prnet::ops::conv2d(graph, x, ker_even, 0), std::invalid_argument);

    const Tensor ker_wrong_cin = rand_tensor({3, 3, 5, 3}, g);
    CHECK_THROWS_AS(prnet::ops::conv2d(graph, x, ker_wrong_cin, 1), std::invalid_argument);

    const Tensor w = rand_tensor({3, 4}, g);
    CHECK_THROWS_AS(prnet::ops::linear(graph, x, w), std::invalid_argument);

    CHECK_THROWS_AS(prnet::ops::adaptive_max_pool2d(graph, x, 0, 2), std::invalid_argument);
    CHECK_THROWS_AS(prnet::ops::add(graph, rand_tensor({2, 3}, g), rand_tensor({4}, g)),
                    std::invalid_argument);

    // Mixed dtypes are refused rather than silently promoted.
    const Tensor xf = rand_tensor({4}, g, -1.0, 1.0, DType::f32);
    CHECK_THROWS_AS(prnet::ops::add(graph, rand_tensor({4}, g), xf), std::invalid_argument);

    CHECK_THROWS_AS(prnet::ops::permute(graph, rand_tensor({2, 3}, g), {0, 0}),
                    std::invalid_argument);
    CHECK_THROWS_AS(prnet::ops::concat(graph, rand_tensor({2, 3}, g), rand_tensor({3, 3}, g), 1),
                    std::invalid_argument);
}

TEST_CASE("non-finite results are reported") {
    Graph graph(false);
    const Tensor big = Tensor::full({4}, 1e308);
    CHECK_THROWS_AS(prnet::ops::mul(graph, big, big), prnet::NonFiniteError);
}

}  // TEST_SUITE
