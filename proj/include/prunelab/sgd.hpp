#pragma once

#include <vector>

#include "prunelab/arch.hpp"
#include "prunelab/errors.hpp"
#include "prunelab/mask.hpp"

namespace prunelab {

struct MomentumBuffer {
    std::vector<float> velocity;

    static MomentumBuffer zeros(int64_t n) {
        MomentumBuffer b;
        b.velocity.assign(static_cast<size_t>(n), 0.0f);
        return b;
    }
};

// One SGD-with-momentum step under a sparsity mask:
//   v <- momentum * v + g,  theta <- theta - lr * v,
// after which both theta and v are zeroed on masked coordinates. Masked
// coordinates therefore stay exactly 0 through any run.
inline void sgd_step(ModelState& state, const std::vector<float>& grad, const SparsityMask& mask,
                     double lr, double momentum, MomentumBuffer& buffer) {
    if (lr <= 0.0) throw ConfigError("sgd_step: learning rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("sgd_step: momentum must be in [0, 1)");
    const size_t n = state.params.size();
    if (grad.size() != n || mask.bits.size() != n || buffer.velocity.size() != n)
        throw ConfigError("sgd_step: gradient/mask/buffer not aligned to parameters");
    for (size_t i = 0; i < n; ++i) {
        if (!mask.bits[i]) {
            state.params[i] = 0.0f;
            buffer.velocity[i] = 0.0f;
            continue;
        }
        float v = static_cast<float>(momentum) * buffer.velocity[i] + grad[i];
        buffer.velocity[i] = v;
        state.params[i] -= static_cast<float>(lr) * v;
    }
}

}  // namespace prunelab
