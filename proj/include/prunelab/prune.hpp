#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "prunelab/arch.hpp"
#include "prunelab/mask.hpp"

namespace prunelab {

// Fraction of prunable coordinates removed after t rounds of pruning
// `fraction` of the survivors each round: 1 - (1 - fraction)^t.
inline double sparsity_after(double fraction, int t) {
    if (t < 0) throw ConfigError("sparsity_after: t must be >= 0");
    if (fraction < 0.0 || fraction >= 1.0)
        throw ConfigError("sparsity_after: fraction must be in [0, 1)");
    return 1.0 - std::pow(1.0 - fraction, t);
}

// Global magnitude pruning: removes floor(fraction * surviving) of the
// surviving prunable coordinates with the smallest |weight|, pooled across
// all prunable segments. Ties break toward the lower flat index. The result
// is nested inside `mask`.
inline SparsityMask magnitude_prune(const ModelState& state, const SparsityMask& mask,
                                    double fraction) {
    if (fraction < 0.0 || fraction >= 1.0)
        throw ConfigError("magnitude_prune: fraction must be in [0, 1)");
    if (mask.size() != state.param_count())
        throw ConfigError("magnitude_prune: mask not aligned to state");
    mask.validate();

    std::vector<int64_t> survivors;
    for (const auto& seg : mask.partition) {
        if (!seg.prunable) continue;
        for (int64_t i = seg.offset; i < seg.offset + seg.count; ++i)
            if (mask.bits[static_cast<size_t>(i)]) survivors.push_back(i);
    }
    int64_t k = static_cast<int64_t>(fraction * static_cast<double>(survivors.size()));
    SparsityMask out = mask;
    if (k == 0) return out;

    auto weight_of = [&](int64_t i) {
        return std::fabs(static_cast<double>(state.params[static_cast<size_t>(i)]));
    };
    auto lower = [&](int64_t a, int64_t b) {
        double wa = weight_of(a), wb = weight_of(b);
        return wa != wb ? wa < wb : a < b;
    };
    std::nth_element(survivors.begin(), survivors.begin() + (k - 1), survivors.end(), lower);
    for (int64_t i = 0; i < k; ++i)
        out.bits[static_cast<size_t>(survivors[static_cast<size_t>(i)])] = 0;
    return out;
}

// Per-layer variant: prunes floor(fraction * surviving) within each prunable
// segment independently. Kept behind a flag for ablations.
inline SparsityMask magnitude_prune_per_layer(const ModelState& state, const SparsityMask& mask,
                                              double fraction) {
    if (fraction < 0.0 || fraction >= 1.0)
        throw ConfigError("magnitude_prune: fraction must be in [0, 1)");
    if (mask.size() != state.param_count())
        throw ConfigError("magnitude_prune: mask not aligned to state");
    SparsityMask out = mask;
    for (const auto& seg : mask.partition) {
        if (!seg.prunable) continue;
        std::vector<int64_t> survivors;
        for (int64_t i = seg.offset; i < seg.offset + seg.count; ++i)
            if (mask.bits[static_cast<size_t>(i)]) survivors.push_back(i);
        int64_t k = static_cast<int64_t>(fraction * static_cast<double>(survivors.size()));
        if (k == 0) continue;
        auto weight_of = [&](int64_t i) {
            return std::fabs(static_cast<double>(state.params[static_cast<size_t>(i)]));
        };
        auto lower = [&](int64_t a, int64_t b) {
            double wa = weight_of(a), wb = weight_of(b);
            return wa != wb ? wa < wb : a < b;
        };
        std::nth_element(survivors.begin(), survivors.begin() + (k - 1), survivors.end(), lower);
        for (int64_t i = 0; i < k; ++i)
            out.bits[static_cast<size_t>(survivors[static_cast<size_t>(i)])] = 0;
    }
    return out;
}

// Surviving coordinates are reset to the reference state; pruned ones
// become exactly zero. The result carries the reference's epoch tag.
inline ModelState rewind(const ModelState& trained, const ModelState& reference,
                         const SparsityMask& mask) {
    if (!(trained.arch == reference.arch))
        throw ConfigError("rewind: architecture mismatch between trained and reference state");
    if (mask.size() != reference.param_count())
        throw ConfigError("rewind: mask not aligned to reference state");
    ModelState out = reference;
    mask.apply(out.params);
    return out;
}

}  // namespace prunelab
