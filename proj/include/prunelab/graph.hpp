#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "prunelab/errors.hpp"
#include "prunelab/tensor.hpp"

namespace prunelab {

// Primitive ops recorded on the tape. Every op's backward rule is itself
// expressed in these primitives (see Graph::emit_vjp), so gradients of
// gradients come out of the same machinery: the reverse pass appends nodes,
// and a second reverse pass can walk through them.
enum class Op : uint8_t {
    kLeaf,            // parameter / constant tensor
    kMatMul,          // [m,k] x [k,n] -> [m,n]
    kTranspose,       // [m,n] -> [n,m]
    kAdd,             // elementwise
    kSub,             // elementwise
    kMul,             // elementwise
    kNeg,             // elementwise
    kScale,           // x * aux_d (compile-time constant)
    kScaleBy,         // x * s, s a scalar node
    kAddRow,          // [m,n] + [n] broadcast over rows
    kSumAxis0,        // [m,n] -> [n]
    kSumAxis1,        // [m,n] -> [m]
    kBroadcastAxis0,  // [n] -> [m,n]
    kBroadcastAxis1,  // [m] -> [m,n]
    kSumAll,          // any -> [1]
    kBroadcastFill,   // [1] -> aux_shape
    kRelu,            // max(x, 0)
    kHeaviside,       // 1 if x > 0 else 0; gradient defined as zero
    kSoftmaxRows,     // row-wise softmax of [m,n]
    kCeLoss,          // mean cross-entropy of logits [m,C] against aux labels
    kReshape,         // view with new shape
    kSlice,           // flat [P] -> [len] starting at aux offset
    kPadScatter,      // flat [len] -> [P] zeros outside the slice
    kIm2Col,          // [N,C,H,W] -> [N*OH*OW, C*K*K], stride 1
    kCol2Im,          // adjoint of kIm2Col
    kAvgPool,         // [N,C,H,W] -> [N,C,H/k,W/k], window k stride k
    kAvgUnpool,       // adjoint of kAvgPool
    kNhwcToNchw,      // [N*OH*OW, C] -> [N,C,OH,OW]
    kNchwToNhwc,      // inverse of kNhwcToNchw
};

using NodeId = int32_t;
constexpr NodeId kNoNode = -1;

struct Node {
    Op op = Op::kLeaf;
    NodeId in0 = kNoNode;
    NodeId in1 = kNoNode;
    Tensor value;
    bool requires_grad = false;
    // Op-specific integers: slice offset/len, conv geometry, pool window...
    std::array<int64_t, 6> aux_i{};
    double aux_d = 0.0;
    Shape aux_shape;
    std::shared_ptr<std::vector<int64_t>> labels;  // kCeLoss only
};

// Recorded computation. Nodes are appended in evaluation order, so the tape
// is topologically sorted by construction and the reverse pass is a single
// descending sweep that touches each op once.
class Graph {
public:
    const Tensor& val(NodeId id) const { return nodes_[static_cast<size_t>(id)].value; }
    const Node& node(NodeId id) const { return nodes_[static_cast<size_t>(id)]; }
    size_t size() const { return nodes_.size(); }

    NodeId leaf(Tensor v, bool requires_grad = false) {
        Node n;
        n.op = Op::kLeaf;
        n.value = std::move(v);
        n.requires_grad = requires_grad;
        return push(std::move(n));
    }
    NodeId constant(Tensor v) { return leaf(std::move(v), false); }
    NodeId scalar(double v) { return constant(tensor_scalar(static_cast<float>(v))); }

    NodeId matmul(NodeId a, NodeId b) {
        const Tensor& A = val(a);
        const Tensor& B = val(b);
        require(A.rank() == 2 && B.rank() == 2 && A.shape[1] == B.shape[0],
                "matmul shape mismatch " + shape_str(A.shape) + " x " + shape_str(B.shape));
        int64_t m = A.shape[0], k = A.shape[1], n = B.shape[1];
        Tensor out({m, n});
        for (int64_t i = 0; i < m; ++i) {
            const float* arow = &A.values[static_cast<size_t>(i * k)];
            for (int64_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (int64_t t = 0; t < k; ++t)
                    acc += static_cast<double>(arow[t]) * B.values[static_cast<size_t>(t * n + j)];
                out.at(i, j) = static_cast<float>(acc);
            }
        }
        return push_binary(Op::kMatMul, a, b, std::move(out));
    }

    NodeId transpose(NodeId a) {
        const Tensor& A = val(a);
        require(A.rank() == 2, "transpose expects rank-2, got " + shape_str(A.shape));
        Tensor out({A.shape[1], A.shape[0]});
        for (int64_t i = 0; i < A.shape[0]; ++i)
            for (int64_t j = 0; j < A.shape[1]; ++j) out.at(j, i) = A.at(i, j);
        return push_unary(Op::kTranspose, a, std::move(out));
    }

    NodeId add(NodeId a, NodeId b) { return ew(Op::kAdd, a, b); }
    NodeId sub(NodeId a, NodeId b) { return ew(Op::kSub, a, b); }
    NodeId mul(NodeId a, NodeId b) { return ew(Op::kMul, a, b); }

    NodeId neg(NodeId a) {
        Tensor out = val(a);
        for (float& v : out.values) v = -v;
        return push_unary(Op::kNeg, a, std::move(out));
    }

    NodeId scale(NodeId a, double c) {
        Tensor out = val(a);
        for (float& v : out.values) v = static_cast<float>(v * c);
        Node n = unary(Op::kScale, a, std::move(out));
        n.aux_d = c;
        return push(std::move(n));
    }

    NodeId scale_by(NodeId a, NodeId s) {
        require(val(s).numel() == 1, "scale_by expects a scalar node");
        double c = val(s).values[0];
        Tensor out = val(a);
        for (float& v : out.values) v = static_cast<float>(v * c);
        return push_binary(Op::kScaleBy, a, s, std::move(out));
    }

    NodeId add_row(NodeId a, NodeId b) {
        const Tensor& A = val(a);
        const Tensor& B = val(b);
        require(A.rank() == 2 && B.rank() == 1 && B.shape[0] == A.shape[1],
                "add_row shape mismatch " + shape_str(A.shape) + " + " + shape_str(B.shape));
        Tensor out = A;
        for (int64_t i = 0; i < A.shape[0]; ++i)
            for (int64_t j = 0; j < A.shape[1]; ++j) out.at(i, j) += B.at(j);
        return push_binary(Op::kAddRow, a, b, std::move(out));
    }

    NodeId sum_axis0(NodeId a) {
        const Tensor& A = val(a);
        require(A.rank() == 2, "sum_axis0 expects rank-2");
        Tensor out({A.shape[1]});
        for (int64_t j = 0; j < A.shape[1]; ++j) {
            double acc = 0.0;
            for (int64_t i = 0; i < A.shape[0]; ++i) acc += A.at(i, j);
            out.at(j) = static_cast<float>(acc);
        }
        return push_unary(Op::kSumAxis0, a, std::move(out));
    }

    NodeId sum_axis1(NodeId a) {
        const Tensor& A = val(a);
        require(A.rank() == 2, "sum_axis1 expects rank-2");
        Tensor out({A.shape[0]});
        for (int64_t i = 0; i < A.shape[0]; ++i) {
            double acc = 0.0;
            for (int64_t j = 0; j < A.shape[1]; ++j) acc += A.at(i, j);
            out.at(i) = static_cast<float>(acc);
        }
        return push_unary(Op::kSumAxis1, a, std::move(out));
    }

    NodeId broadcast_axis0(NodeId a, int64_t m) {
        const Tensor& A = val(a);
        require(A.rank() == 1, "broadcast_axis0 expects rank-1");
        Tensor out({m, A.shape[0]});
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < A.shape[0]; ++j) out.at(i, j) = A.at(j);
        Node n = unary(Op::kBroadcastAxis0, a, std::move(out));
        n.aux_i[0] = m;
        return push(std::move(n));
    }

    NodeId broadcast_axis1(NodeId a, int64_t cols) {
        const Tensor& A = val(a);
        require(A.rank() == 1, "broadcast_axis1 expects rank-1");
        Tensor out({A.shape[0], cols});
        for (int64_t i = 0; i < A.shape[0]; ++i)
            for (int64_t j = 0; j < cols; ++j) out.at(i, j) = A.at(i);
        Node n = unary(Op::kBroadcastAxis1, a, std::move(out));
        n.aux_i[0] = cols;
        return push(std::move(n));
    }

    NodeId sum_all(NodeId a) {
        double acc = 0.0;
        for (float v : val(a).values) acc += v;
        return push_unary(Op::kSumAll, a, Tensor({1}, {static_cast<float>(acc)}));
    }

    NodeId broadcast_fill(NodeId a, Shape shape) {
        require(val(a).numel() == 1, "broadcast_fill expects a scalar node");
        Tensor out(shape);
        for (float& v : out.values) v = val(a).values[0];
        Node n = unary(Op::kBroadcastFill, a, std::move(out));
        n.aux_shape = std::move(shape);
        return push(std::move(n));
    }

    NodeId relu(NodeId a) {
        Tensor out = val(a);
        for (float& v : out.values) v = v > 0.0f ? v : 0.0f;
        return push_unary(Op::kRelu, a, std::move(out));
    }

    // Derivative of relu, treated as locally constant: the node never
    // requires grad, which makes higher-order passes exact almost everywhere.
    NodeId heaviside(NodeId a) {
        Tensor out = val(a);
        for (float& v : out.values) v = v > 0.0f ? 1.0f : 0.0f;
        Node n = unary(Op::kHeaviside, a, std::move(out));
        n.requires_grad = false;
        return push(std::move(n));
    }

    NodeId softmax_rows(NodeId a) {
        const Tensor& A = val(a);
        require(A.rank() == 2, "softmax_rows expects rank-2");
        Tensor out(A.shape);
        for (int64_t i = 0; i < A.shape[0]; ++i) {
            double mx = -1e300;
            for (int64_t j = 0; j < A.shape[1]; ++j) mx = std::max(mx, static_cast<double>(A.at(i, j)));
            double z = 0.0;
            for (int64_t j = 0; j < A.shape[1]; ++j) z += std::exp(static_cast<double>(A.at(i, j)) - mx);
            for (int64_t j = 0; j < A.shape[1]; ++j)
                out.at(i, j) = static_cast<float>(std::exp(static_cast<double>(A.at(i, j)) - mx) / z);
        }
        return push_unary(Op::kSoftmaxRows, a, std::move(out));
    }

    // Mean cross-entropy over the batch, computed with max-subtracted
    // log-sum-exp and double accumulation.
    NodeId ce_loss(NodeId logits, std::shared_ptr<std::vector<int64_t>> labels) {
        const Tensor& Z = val(logits);
        require(Z.rank() == 2, "ce_loss expects rank-2 logits");
        int64_t m = Z.shape[0], c = Z.shape[1];
        require(static_cast<int64_t>(labels->size()) == m,
                "ce_loss: batch rows " + std::to_string(m) + " vs labels " +
                    std::to_string(labels->size()));
        double total = 0.0;
        for (int64_t i = 0; i < m; ++i) {
            int64_t y = (*labels)[static_cast<size_t>(i)];
            require(y >= 0 && y < c, "ce_loss: label " + std::to_string(y) + " out of range");
            double mx = -1e300;
            for (int64_t j = 0; j < c; ++j) mx = std::max(mx, static_cast<double>(Z.at(i, j)));
            double sum = 0.0;
            for (int64_t j = 0; j < c; ++j) sum += std::exp(static_cast<double>(Z.at(i, j)) - mx);
            total += (mx + std::log(sum)) - static_cast<double>(Z.at(i, y));
        }
        Node n = unary(Op::kCeLoss, logits, Tensor({1}, {static_cast<float>(total / static_cast<double>(m))}));
        n.labels = std::move(labels);
        return push(std::move(n));
    }

    NodeId reshape(NodeId a, Shape shape) {
        require(shape_numel(shape) == val(a).numel(),
                "reshape " + shape_str(val(a).shape) + " -> " + shape_str(shape));
        Tensor out(shape, val(a).values);
        Node n = unary(Op::kReshape, a, std::move(out));
        n.aux_shape = std::move(shape);
        return push(std::move(n));
    }

    NodeId slice(NodeId a, int64_t offset, int64_t len) {
        const Tensor& A = val(a);
        require(A.rank() == 1 && offset >= 0 && len >= 0 && offset + len <= A.shape[0],
                "slice out of range");
        Tensor out({len});
        for (int64_t i = 0; i < len; ++i) out.at(i) = A.at(offset + i);
        Node n = unary(Op::kSlice, a, std::move(out));
        n.aux_i[0] = offset;
        n.aux_i[1] = len;
        return push(std::move(n));
    }

    NodeId pad_scatter(NodeId a, int64_t offset, int64_t total) {
        const Tensor& A = val(a);
        require(A.rank() == 1 && offset >= 0 && offset + A.shape[0] <= total, "pad_scatter out of range");
        Tensor out({total});
        for (int64_t i = 0; i < A.shape[0]; ++i) out.at(offset + i) = A.at(i);
        Node n = unary(Op::kPadScatter, a, std::move(out));
        n.aux_i[0] = offset;
        n.aux_i[1] = total;
        return push(std::move(n));
    }

    // Stride-1 im2col. aux = {C, H, W, K, pad, N}; output rows follow
    // (n, oh, ow) order, columns follow (c, kh, kw).
    NodeId im2col(NodeId a, int64_t k, int64_t pad) {
        const Tensor& A = val(a);
        require(A.rank() == 4, "im2col expects [N,C,H,W]");
        int64_t N = A.shape[0], C = A.shape[1], H = A.shape[2], W = A.shape[3];
        int64_t oh = H + 2 * pad - k + 1, ow = W + 2 * pad - k + 1;
        require(oh >= 1 && ow >= 1, "im2col: kernel larger than padded input");
        Tensor out({N * oh * ow, C * k * k});
        int64_t row = 0;
        for (int64_t n = 0; n < N; ++n)
            for (int64_t y = 0; y < oh; ++y)
                for (int64_t x = 0; x < ow; ++x, ++row) {
                    int64_t col = 0;
                    for (int64_t c = 0; c < C; ++c)
                        for (int64_t ky = 0; ky < k; ++ky)
                            for (int64_t kx = 0; kx < k; ++kx, ++col) {
                                int64_t iy = y + ky - pad, ix = x + kx - pad;
                                float v = 0.0f;
                                if (iy >= 0 && iy < H && ix >= 0 && ix < W)
                                    v = A.values[static_cast<size_t>(((n * C + c) * H + iy) * W + ix)];
                                out.at(row, col) = v;
                            }
                }
        Node nd = unary(Op::kIm2Col, a, std::move(out));
        nd.aux_i = {C, H, W, k, pad, N};
        return push(std::move(nd));
    }

    NodeId col2im(NodeId a, std::array<int64_t, 6> geom) {
        const Tensor& A = val(a);
        auto [C, H, W, k, pad, N] = geom;
        int64_t oh = H + 2 * pad - k + 1, ow = W + 2 * pad - k + 1;
        require(A.rank() == 2 && A.shape[0] == N * oh * ow && A.shape[1] == C * k * k,
                "col2im geometry mismatch");
        Tensor out({N, C, H, W});
        int64_t row = 0;
        for (int64_t n = 0; n < N; ++n)
            for (int64_t y = 0; y < oh; ++y)
                for (int64_t x = 0; x < ow; ++x, ++row) {
                    int64_t col = 0;
                    for (int64_t c = 0; c < C; ++c)
                        for (int64_t ky = 0; ky < k; ++ky)
                            for (int64_t kx = 0; kx < k; ++kx, ++col) {
                                int64_t iy = y + ky - pad, ix = x + kx - pad;
                                if (iy >= 0 && iy < H && ix >= 0 && ix < W)
                                    out.values[static_cast<size_t>(((n * C + c) * H + iy) * W + ix)] +=
                                        A.at(row, col);
                            }
                }
        Node nd = unary(Op::kCol2Im, a, std::move(out));
        nd.aux_i = geom;
        return push(std::move(nd));
    }

    NodeId avg_pool(NodeId a, int64_t k) {
        const Tensor& A = val(a);
        require(A.rank() == 4, "avg_pool expects [N,C,H,W]");
        int64_t N = A.shape[0], C = A.shape[1], H = A.shape[2], W = A.shape[3];
        require(H % k == 0 && W % k == 0, "avg_pool: size not divisible by window");
        int64_t oh = H / k, ow = W / k;
        Tensor out({N, C, oh, ow});
        for (int64_t n = 0; n < N; ++n)
            for (int64_t c = 0; c < C; ++c)
                for (int64_t y = 0; y < oh; ++y)
                    for (int64_t x = 0; x < ow; ++x) {
                        double acc = 0.0;
                        for (int64_t ky = 0; ky < k; ++ky)
                            for (int64_t kx = 0; kx < k; ++kx)
                                acc += A.values[static_cast<size_t>(
                                    ((n * C + c) * H + y * k + ky) * W + x * k + kx)];
                        out.values[static_cast<size_t>(((n * C + c) * oh + y) * ow + x)] =
                            static_cast<float>(acc / static_cast<double>(k * k));
                    }
        Node nd = unary(Op::kAvgPool, a, std::move(out));
        nd.aux_i[0] = k;
        return push(std::move(nd));
    }

    NodeId avg_unpool(NodeId a, int64_t k) {
        const Tensor& A = val(a);
        require(A.rank() == 4, "avg_unpool expects [N,C,h,w]");
        int64_t N = A.shape[0], C = A.shape[1], h = A.shape[2], w = A.shape[3];
        Tensor out({N, C, h * k, w * k});
        float inv = 1.0f / static_cast<float>(k * k);
        for (int64_t n = 0; n < N; ++n)
            for (int64_t c = 0; c < C; ++c)
                for (int64_t y = 0; y < h * k; ++y)
                    for (int64_t x = 0; x < w * k; ++x)
                        out.values[static_cast<size_t>(((n * C + c) * h * k + y) * w * k + x)] =
                            A.values[static_cast<size_t>(((n * C + c) * h + y / k) * w + x / k)] * inv;
        Node nd = unary(Op::kAvgUnpool, a, std::move(out));
        nd.aux_i[0] = k;
        return push(std::move(nd));
    }

    // [N*OH*OW, C] (rows in (n, oh, ow) order) -> [N, C, OH, OW].
    NodeId nhwc_to_nchw(NodeId a, int64_t N, int64_t oh, int64_t ow) {
        const Tensor& A = val(a);
        require(A.rank() == 2 && A.shape[0] == N * oh * ow, "nhwc_to_nchw geometry mismatch");
        int64_t C = A.shape[1];
        Tensor out({N, C, oh, ow});
        for (int64_t n = 0; n < N; ++n)
            for (int64_t y = 0; y < oh; ++y)
                for (int64_t x = 0; x < ow; ++x)
                    for (int64_t c = 0; c < C; ++c)
                        out.values[static_cast<size_t>(((n * C + c) * oh + y) * ow + x)] =
                            A.at((n * oh + y) * ow + x, c);
        Node nd = unary(Op::kNhwcToNchw, a, std::move(out));
        nd.aux_i = {N, oh, ow, C, 0, 0};
        return push(std::move(nd));
    }

    NodeId nchw_to_nhwc(NodeId a) {
        const Tensor& A = val(a);
        require(A.rank() == 4, "nchw_to_nhwc expects [N,C,H,W]");
        int64_t N = A.shape[0], C = A.shape[1], oh = A.shape[2], ow = A.shape[3];
        Tensor out({N * oh * ow, C});
        for (int64_t n = 0; n < N; ++n)
            for (int64_t y = 0; y < oh; ++y)
                for (int64_t x = 0; x < ow; ++x)
                    for (int64_t c = 0; c < C; ++c)
                        out.at((n * oh + y) * ow + x, c) =
                            A.values[static_cast<size_t>(((n * C + c) * oh + y) * ow + x)];
        Node nd = unary(Op::kNchwToNhwc, a, std::move(out));
        nd.aux_i = {N, oh, ow, C, 0, 0};
        return push(std::move(nd));
    }

    // Reverse pass from `loss`. Gradients are appended to the tape as ordinary
    // nodes, so the result of this pass is itself differentiable. Returns, for
    // every node that existed when the pass started, the id of its gradient
    // node (kNoNode where no gradient flows).
    std::vector<NodeId> backward(NodeId loss) {
        require(val(loss).numel() == 1, "backward expects a scalar loss node");
        size_t frontier = static_cast<size_t>(loss) + 1;
        std::vector<NodeId> grad(frontier, kNoNode);
        if (!nodes_[static_cast<size_t>(loss)].requires_grad) return grad;
        grad[static_cast<size_t>(loss)] = constant(tensor_scalar(1.0f));
        for (NodeId id = loss; id >= 0; --id) {
            const size_t uid = static_cast<size_t>(id);
            if (grad[uid] == kNoNode || !nodes_[uid].requires_grad) continue;
            emit_vjp(id, grad[uid], grad);
        }
        grad.resize(frontier);
        return grad;
    }

private:
    std::vector<Node> nodes_;

    static void require(bool cond, const std::string& msg) {
        if (!cond) throw ConfigError(msg);
    }

    NodeId push(Node n) {
        nodes_.push_back(std::move(n));
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    Node unary(Op op, NodeId a, Tensor out) {
        Node n;
        n.op = op;
        n.in0 = a;
        n.value = std::move(out);
        n.requires_grad = nodes_[static_cast<size_t>(a)].requires_grad;
        return n;
    }

    NodeId push_unary(Op op, NodeId a, Tensor out) { return push(unary(op, a, std::move(out))); }

    NodeId push_binary(Op op, NodeId a, NodeId b, Tensor out) {
        Node n;
        n.op = op;
        n.in0 = a;
        n.in1 = b;
        n.value = std::move(out);
        n.requires_grad = nodes_[static_cast<size_t>(a)].requires_grad ||
                          nodes_[static_cast<size_t>(b)].requires_grad;
        return push(std::move(n));
    }

    NodeId ew(Op op, NodeId a, NodeId b) {
        const Tensor& A = val(a);
        const Tensor& B = val(b);
        require(same_shape(A, B), "elementwise shape mismatch " + shape_str(A.shape) + " vs " +
                                      shape_str(B.shape));
        Tensor out(A.shape);
        switch (op) {
            case Op::kAdd:
                for (int64_t i = 0; i < A.numel(); ++i) out.at(i) = A.at(i) + B.at(i);
                break;
            case Op::kSub:
                for (int64_t i = 0; i < A.numel(); ++i) out.at(i) = A.at(i) - B.at(i);
                break;
            case Op::kMul:
                for (int64_t i = 0; i < A.numel(); ++i) out.at(i) = A.at(i) * B.at(i);
                break;
            default:
                require(false, "ew: bad op");
        }
        return push_binary(op, a, b, std::move(out));
    }

    void accumulate(std::vector<NodeId>& grad, NodeId target, NodeId contribution) {
        if (!nodes_[static_cast<size_t>(target)].requires_grad) return;
        size_t t = static_cast<size_t>(target);
        grad[t] = (grad[t] == kNoNode) ? contribution : add(grad[t], contribution);
    }

    // Pushing nodes may reallocate the arena, so the fields needed by the
    // backward rules are copied out up front (cheap scalars only).
    struct NodeRef {
        Op op;
        NodeId in0, in1;
        std::array<int64_t, 6> aux_i;
        double aux_d;
        std::shared_ptr<std::vector<int64_t>> labels;
    };

    void emit_vjp(NodeId id, NodeId g, std::vector<NodeId>& grad) {
        const Node& src = nodes_[static_cast<size_t>(id)];
        const NodeRef n{src.op, src.in0, src.in1, src.aux_i, src.aux_d, src.labels};
        switch (n.op) {
            case Op::kLeaf:
                break;
            case Op::kMatMul:
                accumulate(grad, n.in0, matmul(g, transpose(n.in1)));
                accumulate(grad, n.in1, matmul(transpose(n.in0), g));
                break;
            case Op::kTranspose:
                accumulate(grad, n.in0, transpose(g));
                break;
            case Op::kAdd:
                accumulate(grad, n.in0, g);
                accumulate(grad, n.in1, g);
                break;
            case Op::kSub:
                accumulate(grad, n.in0, g);
                accumulate(grad, n.in1, neg(g));
                break;
            case Op::kMul:
                accumulate(grad, n.in0, mul(g, n.in1));
                accumulate(grad, n.in1, mul(g, n.in0));
                break;
            case Op::kNeg:
                accumulate(grad, n.in0, neg(g));
                break;
            case Op::kScale:
                accumulate(grad, n.in0, scale(g, n.aux_d));
                break;
            case Op::kScaleBy:
                accumulate(grad, n.in0, scale_by(g, n.in1));
                accumulate(grad, n.in1, sum_all(mul(g, n.in0)));
                break;
            case Op::kAddRow:
                accumulate(grad, n.in0, g);
                accumulate(grad, n.in1, sum_axis0(g));
                break;
            case Op::kSumAxis0:
                accumulate(grad, n.in0, broadcast_axis0(g, val(n.in0).shape[0]));
                break;
            case Op::kSumAxis1:
                accumulate(grad, n.in0, broadcast_axis1(g, val(n.in0).shape[1]));
                break;
            case Op::kBroadcastAxis0:
                accumulate(grad, n.in0, sum_axis0(g));
                break;
            case Op::kBroadcastAxis1:
                accumulate(grad, n.in0, sum_axis1(g));
                break;
            case Op::kSumAll:
                accumulate(grad, n.in0, broadcast_fill(g, val(n.in0).shape));
                break;
            case Op::kBroadcastFill:
                accumulate(grad, n.in0, sum_all(g));
                break;
            case Op::kRelu:
                accumulate(grad, n.in0, mul(g, heaviside(n.in0)));
                break;
            case Op::kHeaviside:
                break;
            case Op::kSoftmaxRows: {
                NodeId s = id;
                NodeId gs = mul(g, s);
                NodeId dots = sum_axis1(gs);
                NodeId corr = broadcast_axis1(dots, val(id).shape[1]);
                accumulate(grad, n.in0, mul(s, sub(g, corr)));
                break;
            }
            case Op::kCeLoss: {
                const Tensor& Z = val(n.in0);
                int64_t m = Z.shape[0], c = Z.shape[1];
                Tensor onehot({m, c});
                for (int64_t i = 0; i < m; ++i)
                    onehot.at(i, (*n.labels)[static_cast<size_t>(i)]) = 1.0f;
                NodeId diff = sub(softmax_rows(n.in0), constant(std::move(onehot)));
                NodeId coeff = scale(g, 1.0 / static_cast<double>(m));
                accumulate(grad, n.in0, scale_by(diff, coeff));
                break;
            }
            case Op::kReshape:
                accumulate(grad, n.in0, reshape(g, val(n.in0).shape));
                break;
            case Op::kSlice:
                accumulate(grad, n.in0, pad_scatter(g, n.aux_i[0], val(n.in0).shape[0]));
                break;
            case Op::kPadScatter:
                accumulate(grad, n.in0, slice(g, n.aux_i[0], val(n.in0).shape[0]));
                break;
            case Op::kIm2Col:
                accumulate(grad, n.in0, col2im(g, n.aux_i));
                break;
            case Op::kCol2Im:
                accumulate(grad, n.in0, im2col(g, n.aux_i[3], n.aux_i[4]));
                break;
            case Op::kAvgPool:
                accumulate(grad, n.in0, avg_unpool(g, n.aux_i[0]));
                break;
            case Op::kAvgUnpool:
                accumulate(grad, n.in0, avg_pool(g, n.aux_i[0]));
                break;
            case Op::kNhwcToNchw:
                accumulate(grad, n.in0, nchw_to_nhwc(g));
                break;
            case Op::kNchwToNhwc:
                accumulate(grad, n.in0, nhwc_to_nchw(g, n.aux_i[0], n.aux_i[1], n.aux_i[2]));
                break;
        }
    }
};

}  // namespace prunelab
