#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "prunelab/errors.hpp"
#include "prunelab/hash.hpp"
#include "prunelab/rng.hpp"
#include "prunelab/tensor.hpp"

namespace prunelab {

enum class Role : uint8_t { kRealTrain, kSynthetic, kValidation, kTest };

inline std::string role_name(Role r) {
    switch (r) {
        case Role::kRealTrain: return "real-train";
        case Role::kSynthetic: return "synthetic";
        case Role::kValidation: return "validation";
        case Role::kTest: return "test";
    }
    return "?";
}

inline Role role_from_name(const std::string& s) {
    if (s == "real-train") return Role::kRealTrain;
    if (s == "synthetic") return Role::kSynthetic;
    if (s == "validation") return Role::kValidation;
    if (s == "test") return Role::kTest;
    throw FormatError("unknown dataset role '" + s + "'");
}

// Feature/label examples with bookkeeping for which split they play in an
// experiment. ipc > 0 asserts exact class balance (ipc examples per class).
struct LabeledDataset {
    Tensor features;  // [N, ...feature shape]
    std::vector<int64_t> labels;
    Role role = Role::kRealTrain;
    int64_t ipc = 0;
    int64_t class_count = 0;

    int64_t size() const { return features.rank() ? features.shape[0] : 0; }

    Shape feature_shape() const {
        return Shape(features.shape.begin() + 1, features.shape.end());
    }

    int64_t feature_numel() const { return shape_numel(feature_shape()); }

    void validate() const {
        if (size() <= 0) throw ConfigError("dataset is empty");
        if (static_cast<int64_t>(labels.size()) != size())
            throw ConfigError("dataset: " + std::to_string(size()) + " examples vs " +
                              std::to_string(labels.size()) + " labels");
        std::vector<int64_t> counts(static_cast<size_t>(class_count), 0);
        for (int64_t y : labels) {
            if (y < 0 || y >= class_count)
                throw ConfigError("dataset: label " + std::to_string(y) + " outside [0, " +
                                  std::to_string(class_count) + ")");
            counts[static_cast<size_t>(y)]++;
        }
        if (ipc > 0)
            for (int64_t c = 0; c < class_count; ++c)
                if (counts[static_cast<size_t>(c)] != ipc)
                    throw ConfigError("dataset: class " + std::to_string(c) + " has " +
                                      std::to_string(counts[static_cast<size_t>(c)]) +
                                      " examples, expected ipc=" + std::to_string(ipc));
    }

    // Gather rows by index into a batch tensor + labels.
    std::pair<Tensor, std::vector<int64_t>> gather(const std::vector<int64_t>& idx) const {
        Shape bshape = features.shape;
        bshape[0] = static_cast<int64_t>(idx.size());
        Tensor batch(bshape);
        int64_t row_sz = feature_numel();
        std::vector<int64_t> y(idx.size());
        for (size_t i = 0; i < idx.size(); ++i) {
            const float* src = &features.values[static_cast<size_t>(idx[i] * row_sz)];
            std::copy(src, src + row_sz, &batch.values[i * static_cast<size_t>(row_sz)]);
            y[i] = labels[static_cast<size_t>(idx[i])];
        }
        return {std::move(batch), std::move(y)};
    }

    uint64_t row_hash(int64_t i) const {
        int64_t row_sz = feature_numel();
        return fnv1a64(&features.values[static_cast<size_t>(i * row_sz)],
                       static_cast<size_t>(row_sz) * sizeof(float));
    }

    uint64_t content_hash() const {
        uint64_t h = fnv1a64(features.values);
        return fnv1a64(labels.data(), labels.size() * sizeof(int64_t), h);
    }
};

// Gaussian clusters, one seeded mean per class, then a global min-max rescale
// into [0, 1] so features live in the same range as image pixels.
inline LabeledDataset make_blobs(int64_t class_count, int64_t per_class, int64_t dim, double spread,
                                 uint64_t seed) {
    if (class_count <= 0 || per_class <= 0 || dim <= 0)
        throw ConfigError("make_blobs: counts must be positive");
    if (spread < 0.0) throw ConfigError("make_blobs: spread must be >= 0");

    std::vector<double> means(static_cast<size_t>(class_count * dim));
    Rng mean_rng(mix_key(seed, 0x6d65616e));  // "mean"
    for (auto& m : means) m = mean_rng.normal();

    LabeledDataset ds;
    ds.features = Tensor({class_count * per_class, dim});
    ds.labels.resize(static_cast<size_t>(class_count * per_class));
    ds.role = Role::kRealTrain;
    ds.ipc = per_class;
    ds.class_count = class_count;

    std::vector<double> raw(static_cast<size_t>(class_count * per_class * dim));
    int64_t row = 0;
    for (int64_t c = 0; c < class_count; ++c) {
        Rng rng(mix_key(seed, 0x73616d70, static_cast<uint64_t>(c)));  // "samp"
        for (int64_t i = 0; i < per_class; ++i, ++row) {
            ds.labels[static_cast<size_t>(row)] = c;
            for (int64_t d = 0; d < dim; ++d)
                raw[static_cast<size_t>(row * dim + d)] =
                    means[static_cast<size_t>(c * dim + d)] + spread * rng.normal();
        }
    }
    double lo = raw[0], hi = raw[0];
    for (double v : raw) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    double scale = (hi > lo) ? 1.0 / (hi - lo) : 0.0;
    for (size_t i = 0; i < raw.size(); ++i)
        ds.features.values[i] =
            (hi > lo) ? static_cast<float>((raw[i] - lo) * scale) : 0.5f;
    return ds;
}

// Deterministic class-balanced split: the first `take_per_class` examples of
// each class (in index order) go to the first output.
inline std::pair<LabeledDataset, LabeledDataset> split_per_class(const LabeledDataset& ds,
                                                                 int64_t take_per_class,
                                                                 Role taken_role, Role rest_role) {
    std::vector<int64_t> taken_idx, rest_idx;
    std::vector<int64_t> counts(static_cast<size_t>(ds.class_count), 0);
    for (int64_t i = 0; i < ds.size(); ++i) {
        int64_t c = ds.labels[static_cast<size_t>(i)];
        if (counts[static_cast<size_t>(c)]++ < take_per_class)
            taken_idx.push_back(i);
        else
            rest_idx.push_back(i);
    }
    for (int64_t c = 0; c < ds.class_count; ++c)
        if (counts[static_cast<size_t>(c)] < take_per_class)
            throw ConfigError("split_per_class: class " + std::to_string(c) + " has only " +
                              std::to_string(counts[static_cast<size_t>(c)]) + " examples");
    auto build = [&](const std::vector<int64_t>& idx, Role role, int64_t ipc) {
        auto [feat, labels] = ds.gather(idx);
        LabeledDataset out;
        out.features = std::move(feat);
        out.labels = std::move(labels);
        out.role = role;
        out.class_count = ds.class_count;
        out.ipc = ipc;
        return out;
    };
    int64_t rest_ipc = (ds.ipc > 0) ? ds.ipc - take_per_class : 0;
    return {build(taken_idx, taken_role, take_per_class), build(rest_idx, rest_role, rest_ipc)};
}

// Seeded random split; the held-out fraction becomes `held_role`. Balance is
// not preserved, so ipc resets to 0.
inline std::pair<LabeledDataset, LabeledDataset> split_random(const LabeledDataset& ds,
                                                              double held_fraction, uint64_t seed,
                                                              Role held_role = Role::kValidation) {
    if (held_fraction <= 0.0 || held_fraction >= 1.0)
        throw ConfigError("split_random: fraction must be in (0, 1)");
    int64_t n = ds.size();
    int64_t held = static_cast<int64_t>(held_fraction * static_cast<double>(n));
    if (held < 1 || held >= n) throw ConfigError("split_random: degenerate split");
    std::vector<int64_t> perm = keyed_permutation(mix_key(seed, 0x73706c69), n);  // "spli"
    std::vector<int64_t> held_idx(perm.begin(), perm.begin() + held);
    std::vector<int64_t> rest_idx(perm.begin() + held, perm.end());
    std::sort(held_idx.begin(), held_idx.end());
    std::sort(rest_idx.begin(), rest_idx.end());
    auto build = [&](const std::vector<int64_t>& idx, Role role) {
        auto [feat, labels] = ds.gather(idx);
        LabeledDataset out;
        out.features = std::move(feat);
        out.labels = std::move(labels);
        out.role = role;
        out.class_count = ds.class_count;
        out.ipc = 0;
        return out;
    };
    return {build(rest_idx, ds.role), build(held_idx, held_role)};
}

// Data ordering for one epoch, fully determined by (order_seed, epoch, N).
struct EpochOrder {
    uint64_t order_seed;
    int64_t epoch;
    std::vector<int64_t> permutation;
};

inline EpochOrder epoch_order(int64_t n, uint64_t order_seed, int64_t epoch) {
    if (n <= 0) throw ConfigError("epoch_order: dataset is empty");
    EpochOrder e;
    e.order_seed = order_seed;
    e.epoch = epoch;
    e.permutation = keyed_permutation(mix_key(order_seed, static_cast<uint64_t>(epoch)), n);
    return e;
}

// real examples per class / synthetic examples per class.
struct CompressionRatio {
    int64_t real_per_class;
    int64_t ipc;
    double ratio;
};

inline CompressionRatio compression_ratio(int64_t real_per_class, int64_t ipc) {
    if (ipc <= 0) throw ConfigError("compression_ratio: ipc must be positive");
    if (real_per_class <= 0) throw ConfigError("compression_ratio: real_per_class must be positive");
    return {real_per_class, ipc,
            static_cast<double>(real_per_class) / static_cast<double>(ipc)};
}

}  // namespace prunelab
