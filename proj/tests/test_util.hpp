#pragma once

#include <functional>
#include <vector>

#include "prunelab/graph.hpp"
#include "prunelab/rng.hpp"

namespace testutil {

using prunelab::Graph;
using prunelab::NodeId;
using prunelab::Rng;
using prunelab::Shape;
using prunelab::Tensor;

inline Tensor random_tensor(Rng& rng, const Shape& shape, double lo = -1.0, double hi = 1.0) {
    Tensor t(shape);
    for (auto& v : t.values) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

// Random tensor bounded away from zero (for relu-kink safety in FD checks).
inline Tensor random_tensor_off_zero(Rng& rng, const Shape& shape, double margin = 0.05) {
    Tensor t(shape);
    for (auto& v : t.values) {
        double x = rng.uniform(margin, 1.0);
        v = static_cast<float>(rng.next_u64() & 1 ? x : -x);
    }
    return t;
}

struct GradCheckResult {
    int checked = 0;
    int failed = 0;
    double worst = 0.0;  // worst |ad - fd| / max(1, |ad|, |fd|)
};

// Central-difference check of reverse-mode gradients. `build` assembles a
// scalar node from leaf ids; it is re-run from scratch for every probe, so
// it must be a pure function of the leaf values.
// eps defaults near the float32 optimum for O(1) outputs: rounding noise
// ~6e-8/eps against truncation ~eps^2; builders should keep the scalar O(1).
inline GradCheckResult gradcheck(
    const std::function<NodeId(Graph&, const std::vector<NodeId>&)>& build,
    std::vector<Tensor> inputs, Rng& rng, double tol = 1e-4, int max_coords_per_input = 8,
    double eps = 5e-3) {
    Graph g;
    std::vector<NodeId> leaves;
    for (const auto& t : inputs) leaves.push_back(g.leaf(t, true));
    NodeId out = build(g, leaves);
    std::vector<NodeId> grads = g.backward(out);

    auto value_at = [&](const std::vector<Tensor>& xs) {
        Graph g2;
        std::vector<NodeId> ls;
        for (const auto& t : xs) ls.push_back(g2.leaf(t, false));
        return static_cast<double>(g2.val(build(g2, ls)).values[0]);
    };

    GradCheckResult res;
    for (size_t ii = 0; ii < inputs.size(); ++ii) {
        NodeId gid = grads[static_cast<size_t>(leaves[ii])];
        int64_t n = inputs[ii].numel();
        for (int c = 0; c < max_coords_per_input; ++c) {
            int64_t j = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(n)));
            double ad = gid == prunelab::kNoNode
                            ? 0.0
                            : static_cast<double>(g.val(gid).at(j));
            std::vector<Tensor> plus = inputs, minus = inputs;
            plus[ii].at(j) = static_cast<float>(plus[ii].at(j) + eps);
            minus[ii].at(j) = static_cast<float>(minus[ii].at(j) - eps);
            double fd = (value_at(plus) - value_at(minus)) / (2.0 * eps);
            double err = std::fabs(ad - fd) / std::max({1.0, std::fabs(ad), std::fabs(fd)});
            res.worst = std::max(res.worst, err);
            res.checked++;
            if (err > tol) res.failed++;
        }
    }
    return res;
}

}  // namespace testutil
