#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "prunelab/arch.hpp"
#include "prunelab/graph.hpp"
#include "prunelab/tensor.hpp"

namespace prunelab {

// Builds the forward pass of `arch` on the tape. `params` must be a flat [P]
// node, `batch` a [N, ...input_shape] node. Returns the logits node.
// Activations are checked for finiteness after every layer; a failure names
// the layer.
inline NodeId build_forward(Graph& g, const Arch& arch, NodeId params, NodeId batch) {
    const Tensor& B = g.val(batch);
    if (B.rank() != arch.input_shape.size() + 1)
        throw ConfigError("batch rank " + std::to_string(B.rank()) + " does not match input shape " +
                          shape_str(arch.input_shape));
    for (size_t i = 0; i < arch.input_shape.size(); ++i)
        if (B.shape[i + 1] != arch.input_shape[i])
            throw ConfigError("batch shape " + shape_str(B.shape) + " does not match input shape " +
                              shape_str(arch.input_shape));
    int64_t n = B.shape[0];

    NodeId cur = batch;
    Shape cur_shape = arch.input_shape;
    int64_t off = 0;
    for (size_t li = 0; li < arch.layers.size(); ++li) {
        const LayerSpec& l = arch.layers[li];
        switch (l.kind) {
            case LayerKind::kDense: {
                NodeId w = g.reshape(g.slice(params, off, l.in * l.out), {l.out, l.in});
                off += l.in * l.out;
                NodeId b = g.slice(params, off, l.out);
                off += l.out;
                cur = g.add_row(g.matmul(cur, g.transpose(w)), b);
                break;
            }
            case LayerKind::kConv2d: {
                int64_t wcount = l.out * l.in * l.k * l.k;
                NodeId w = g.reshape(g.slice(params, off, wcount), {l.out, l.in * l.k * l.k});
                off += wcount;
                NodeId b = g.slice(params, off, l.out);
                off += l.out;
                NodeId cols = g.im2col(cur, l.k, l.pad);
                NodeId z = g.add_row(g.matmul(cols, g.transpose(w)), b);
                int64_t oh = cur_shape[1] + 2 * l.pad - l.k + 1;
                int64_t ow = cur_shape[2] + 2 * l.pad - l.k + 1;
                cur = g.nhwc_to_nchw(z, n, oh, ow);
                break;
            }
            case LayerKind::kRelu:
                cur = g.relu(cur);
                break;
            case LayerKind::kAvgPool:
                cur = g.avg_pool(cur, l.k);
                break;
            case LayerKind::kFlatten: {
                Shape flat = {n, shape_numel(cur_shape)};
                cur = g.reshape(cur, flat);
                break;
            }
        }
        cur_shape = Arch::shape_after(cur_shape, l, li);
        if (!g.val(cur).all_finite())
            throw NumericError("non-finite activation after layer " + std::to_string(li),
                               static_cast<int>(li));
    }
    return cur;
}

// A recorded forward pass: the tape plus handles into it. backward() may be
// called once.
struct Tape {
    Graph graph;
    NodeId params = kNoNode;
    NodeId batch = kNoNode;
    NodeId logits = kNoNode;
    NodeId loss = kNoNode;
    double loss_value = 0.0;
    bool consumed = false;
};

inline Tape forward(const ModelState& state, const Tensor& batch,
                    const std::vector<int64_t>& labels) {
    if (batch.rank() < 1 || batch.shape[0] != static_cast<int64_t>(labels.size()))
        throw ConfigError("batch rows " + std::to_string(batch.rank() ? batch.shape[0] : 0) +
                          " do not match label count " + std::to_string(labels.size()));
    if (state.param_count() != state.arch.param_count())
        throw ConfigError("state params do not match arch parameter count");
    Tape t;
    t.params = t.graph.leaf(Tensor({state.param_count()}, state.params), /*requires_grad=*/true);
    t.batch = t.graph.constant(batch);
    t.logits = build_forward(t.graph, state.arch, t.params, t.batch);
    t.loss = t.graph.ce_loss(t.logits, std::make_shared<std::vector<int64_t>>(labels));
    t.loss_value = static_cast<double>(t.graph.val(t.loss).values[0]);
    if (!std::isfinite(t.loss_value))
        throw NumericError("non-finite loss", static_cast<int>(state.arch.layers.size()));
    return t;
}

// Gradient of the recorded loss with respect to the flat parameter vector.
// Parameters that do not reach the loss get an exact zero.
inline std::vector<float> backward(Tape& tape) {
    if (tape.consumed) throw UsageError("tape already consumed by a previous backward()");
    tape.consumed = true;
    std::vector<NodeId> grads = tape.graph.backward(tape.loss);
    NodeId gp = grads[static_cast<size_t>(tape.params)];
    if (gp == kNoNode)
        return std::vector<float>(static_cast<size_t>(tape.graph.val(tape.params).numel()), 0.0f);
    return tape.graph.val(gp).values;
}

inline std::vector<float> loss_grad(const ModelState& state, const Tensor& batch,
                                    const std::vector<int64_t>& labels, double* loss_out = nullptr) {
    Tape t = forward(state, batch, labels);
    if (loss_out) *loss_out = t.loss_value;
    return backward(t);
}

using GradFn = std::function<std::vector<float>(const std::vector<float>&)>;

// Hessian-vector product by central differencing of an exact gradient:
// (grad(theta + eps v) - grad(theta - eps v)) / (2 eps), eps scaled by the
// max magnitude of v.
inline std::vector<float> hvp_fd(const GradFn& grad_fn, const std::vector<float>& params,
                                 const std::vector<float>& v) {
    if (v.size() != params.size())
        throw ConfigError("hvp direction length " + std::to_string(v.size()) +
                          " does not match parameter count " + std::to_string(params.size()));
    const double eps = 1e-3 / std::max(1.0, max_abs(v));
    std::vector<float> plus = params, minus = params;
    for (size_t i = 0; i < v.size(); ++i) {
        plus[i] = static_cast<float>(plus[i] + eps * v[i]);
        minus[i] = static_cast<float>(minus[i] - eps * v[i]);
    }
    std::vector<float> gp = grad_fn(plus);
    std::vector<float> gm = grad_fn(minus);
    std::vector<float> out(v.size());
    for (size_t i = 0; i < v.size(); ++i) {
        double h = (static_cast<double>(gp[i]) - static_cast<double>(gm[i])) / (2.0 * eps);
        if (!std::isfinite(h)) throw NumericError("non-finite Hessian-vector product");
        out[i] = static_cast<float>(h);
    }
    return out;
}

inline std::vector<float> hvp(const ModelState& state, const Tensor& batch,
                              const std::vector<int64_t>& labels, const std::vector<float>& v) {
    ModelState probe = state;
    return hvp_fd(
        [&](const std::vector<float>& p) {
            probe.params = p;
            return loss_grad(probe, batch, labels);
        },
        state.params, v);
}

// Forward-only logits (parameters treated as constants).
inline Tensor predict_logits(const ModelState& state, const Tensor& batch) {
    Graph g;
    NodeId p = g.constant(Tensor({state.param_count()}, state.params));
    NodeId b = g.constant(batch);
    return g.val(build_forward(g, state.arch, p, b));
}

}  // namespace prunelab
