#include "prunelab/graph.hpp"

#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace prunelab;
using testutil::gradcheck;
using testutil::random_tensor;
using testutil::random_tensor_off_zero;

TEST(Graph, QuadraticGradient) {
    Graph g;
    NodeId w = g.leaf(Tensor({2}, {1.0f, 2.0f}), true);
    NodeId loss = g.sum_all(g.mul(w, w));
    auto grads = g.backward(loss);
    const Tensor& gw = g.val(grads[static_cast<size_t>(w)]);
    EXPECT_FLOAT_EQ(gw.at(0), 2.0f);
    EXPECT_FLOAT_EQ(gw.at(1), 4.0f);
}

TEST(Graph, BackwardIsItselfDifferentiable) {
    // f(x) = x^3: first backward gives 3x^2, a second pass over the emitted
    // nodes gives 6x.
    Graph g;
    NodeId x = g.leaf(Tensor({1}, {3.0f}), true);
    NodeId f = g.sum_all(g.mul(g.mul(x, x), x));
    auto grads = g.backward(f);
    NodeId gx = grads[static_cast<size_t>(x)];
    ASSERT_NE(gx, kNoNode);
    EXPECT_NEAR(g.val(gx).at(0), 27.0f, 1e-4);
    auto grads2 = g.backward(g.sum_all(gx));
    NodeId gxx = grads2[static_cast<size_t>(x)];
    ASSERT_NE(gxx, kNoNode);
    EXPECT_NEAR(g.val(gxx).at(0), 18.0f, 1e-3);
}

TEST(Graph, ShapeMismatchRejected) {
    Graph g;
    NodeId a = g.constant(Tensor({2, 3}));
    NodeId b = g.constant(Tensor({3, 3}));
    EXPECT_THROW(g.add(a, b), ConfigError);
    EXPECT_THROW(g.matmul(a, a), ConfigError);
}

TEST(Graph, UniformLogitsGiveLogC) {
    Graph g;
    NodeId z = g.constant(Tensor({1, 10}));
    NodeId loss = g.ce_loss(z, std::make_shared<std::vector<int64_t>>(std::vector<int64_t>{3}));
    EXPECT_NEAR(g.val(loss).at(0), 2.302585, 1e-6);
}

namespace {

// One randomized trial per primitive; returns worst relative error seen.
double run_primitive_trials(uint64_t seed, int trials_per_op, int* total_checked) {
    Rng rng(seed);
    double worst = 0.0;
    int checked = 0;
    auto track = [&](const testutil::GradCheckResult& r) {
        worst = std::max(worst, r.worst);
        checked += r.checked;
        EXPECT_EQ(r.failed, 0) << "worst err " << r.worst;
    };

    for (int t = 0; t < trials_per_op; ++t) {
        int64_t m = 2 + static_cast<int64_t>(rng.next_below(3));
        int64_t k = 2 + static_cast<int64_t>(rng.next_below(3));
        int64_t n = 2 + static_cast<int64_t>(rng.next_below(3));

        // matmul + transpose
        track(gradcheck(
            [&](Graph& g, const std::vector<NodeId>& in) {
                return g.scale(g.sum_all(g.matmul(in[0], g.transpose(in[1]))), 0.1);
            },
            {random_tensor(rng, {m, k}), random_tensor(rng, {n, k})}, rng));

        // elementwise add/sub/mul/neg/scale chained
        track(gradcheck(
            [&](Graph& g, const std::vector<NodeId>& in) {
                NodeId s = g.sub(g.add(in[0], in[1]), g.neg(in[1]));
                return g.scale(g.sum_all(g.mul(g.scale(s, 0.7), in[0])), 0.1);
            },
            {random_tensor(rng, {m, n}), random_tensor(rng, {m, n})}, rng));

        // scale_by with a scalar node
        track(gradcheck(
            [&](Graph& g, const std::vector<NodeId>& in) {
                return g.scale(g.sum_all(g.scale_by(in[0], g.sum_all(in[1]))), 0.1);
            },
            {random_tensor(rng, {m, n}), random_tensor(rng, {2})}, rng));

        // add_row bias broadcast + axis reductions
        track(gradcheck(
            [&](Graph& g, const std::vector<NodeId>& in) {
                NodeId z = g.add_row(in[0], in[1]);
                NodeId r0 = g.sum_all(g.mul(g.broadcast_axis0(g.sum_axis0(z), m), z));
                NodeId r1 = g.sum_all(g.mul(g.broadcast_axis1(g.sum_axis1(z), n), z));
                return g.scale(g.add(r0, r1), 0.02);
            },
            {random_tensor(rng, {m, n}), random_tensor(rng, {n})}, rng));

        // relu away from the kink
        track(gradcheck(
            [&](Graph& g, const std::vector<NodeId>& in) { return g.scale(g.sum_all(g.relu(in[0])), 0.2); },
            {random_tensor_off_zero(rng, {m, n})}, rng));

        // softmax composed with a random projection
        Tensor proj = random_tensor(rng, {m, n});
        track(gradcheck(
            [&, proj](Graph& g, const std::vector<NodeId>& in) {
                return g.sum_all(g.mul(g.softmax_rows(in[0]), g.constant(proj)));
            },
            {random_tensor(rng, {m, n}, -2.0, 2.0)}, rng));

        // cross-entropy
        auto labels = std::make_shared<std::vector<int64_t>>();
        for (int64_t i = 0; i < m; ++i)
            labels->push_back(static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(n))));
        track(gradcheck(
            [&, labels](Graph& g, const std::vector<NodeId>& in) {
                return g.ce_loss(in[0], labels);
            },
            {random_tensor(rng, {m, n}, -2.0, 2.0)}, rng));

        // reshape + slice + pad_scatter
        track(gradcheck(
            [&](Graph& g, const std::vector<NodeId>& in) {
                NodeId flat = g.reshape(in[0], {m * n});
                NodeId piece = g.slice(flat, 1, m * n - 2);
                NodeId back = g.pad_scatter(piece, 1, m * n);
                return g.scale(g.sum_all(g.mul(back, flat)), 0.2);
            },
            {random_tensor(rng, {m, n})}, rng));

        // conv stack: im2col + matmul + nhwc/nchw + avg_pool
        int64_t C = 1 + static_cast<int64_t>(rng.next_below(2));
        int64_t H = 4, W = 4, K = 3, OC = 2;
        track(gradcheck(
            [&](Graph& g, const std::vector<NodeId>& in) {
                NodeId cols = g.im2col(in[0], K, 1);
                NodeId z = g.matmul(cols, g.transpose(in[1]));
                NodeId img = g.nhwc_to_nchw(z, 2, H, W);
                NodeId pooled = g.avg_pool(img, 2);
                return g.scale(g.sum_all(g.mul(pooled, pooled)), 0.05);
            },
            {random_tensor(rng, {2, C, H, W}), random_tensor(rng, {OC, C * K * K})}, rng));

        // sum_all / broadcast_fill pair
        track(gradcheck(
            [&](Graph& g, const std::vector<NodeId>& in) {
                return g.scale(g.sum_all(g.mul(g.broadcast_fill(g.sum_all(in[0]), {m, n}), in[0])), 0.02);
            },
            {random_tensor(rng, {m, n})}, rng));
    }
    if (total_checked) *total_checked = checked;
    return worst;
}

}  // namespace

TEST(Graph, AllPrimitivesMatchFiniteDifferences) {
    int checked = 0;
    double worst = run_primitive_trials(7, 12, &checked);
    EXPECT_GE(checked, 1000);
    EXPECT_LT(worst, 1e-4);
}

TEST(Graph, HeavisideBlocksGradient) {
    Graph g;
    NodeId x = g.leaf(Tensor({3}, {-1.0f, 0.5f, 2.0f}), true);
    NodeId h = g.heaviside(x);
    EXPECT_FALSE(g.node(h).requires_grad);
    NodeId loss = g.sum_all(g.mul(h, x));
    auto grads = g.backward(loss);
    const Tensor& gx = g.val(grads[static_cast<size_t>(x)]);
    // d/dx of heaviside(x) * x with the step treated as constant
    EXPECT_FLOAT_EQ(gx.at(0), 0.0f);
    EXPECT_FLOAT_EQ(gx.at(1), 1.0f);
    EXPECT_FLOAT_EQ(gx.at(2), 1.0f);
}

TEST(Graph, Col2ImIsAdjointOfIm2Col) {
    // <im2col(x), y> == <x, col2im(y)> for random x, y
    Rng rng(99);
    Tensor x = random_tensor(rng, {2, 2, 5, 5});
    Graph g;
    NodeId xn = g.constant(x);
    NodeId cols = g.im2col(xn, 3, 1);
    Tensor y = random_tensor(rng, g.val(cols).shape);
    NodeId yn = g.constant(y);
    NodeId lhs = g.sum_all(g.mul(cols, yn));
    NodeId rhs = g.sum_all(g.mul(xn, g.col2im(yn, g.node(cols).aux_i)));
    EXPECT_NEAR(g.val(lhs).at(0), g.val(rhs).at(0), 1e-3);
}
