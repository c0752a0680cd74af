#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "prunelab/errors.hpp"
#include "prunelab/hash.hpp"
#include "prunelab/rng.hpp"
#include "prunelab/tensor.hpp"

namespace prunelab {

enum class LayerKind : uint8_t { kDense, kConv2d, kRelu, kAvgPool, kFlatten };

// One layer of the supported set. Dense: in/out. Conv2d: in/out channels,
// square kernel k, pad (0 = valid, (k-1)/2 = same). AvgPool: window k,
// stride k.
struct LayerSpec {
    LayerKind kind;
    int64_t in = 0;
    int64_t out = 0;
    int64_t k = 0;
    int64_t pad = 0;

    static LayerSpec dense(int64_t in, int64_t out) { return {LayerKind::kDense, in, out, 0, 0}; }
    static LayerSpec conv2d(int64_t in_ch, int64_t out_ch, int64_t k, int64_t pad) {
        return {LayerKind::kConv2d, in_ch, out_ch, k, pad};
    }
    static LayerSpec relu() { return {LayerKind::kRelu}; }
    static LayerSpec avg_pool(int64_t k) { return {LayerKind::kAvgPool, 0, 0, k, 0}; }
    static LayerSpec flatten() { return {LayerKind::kFlatten}; }

    int64_t param_count() const {
        switch (kind) {
            case LayerKind::kDense:
                return in * out + out;
            case LayerKind::kConv2d:
                return out * in * k * k + out;
            default:
                return 0;
        }
    }
};

// A contiguous span of the flat parameter vector belonging to one weight or
// bias block. Biases are never prunable.
struct ParamSegment {
    std::string name;
    int64_t offset;
    int64_t count;
    bool prunable;
    int layer_index;
};

struct Arch {
    Shape input_shape;  // per-example shape, {D} or {C,H,W}
    std::vector<LayerSpec> layers;

    int64_t param_count() const {
        int64_t n = 0;
        for (const auto& l : layers) n += l.param_count();
        return n;
    }

    std::vector<ParamSegment> segments() const {
        std::vector<ParamSegment> segs;
        int64_t off = 0;
        for (size_t i = 0; i < layers.size(); ++i) {
            const LayerSpec& l = layers[i];
            std::string base;
            int64_t wcount = 0, bcount = 0;
            if (l.kind == LayerKind::kDense) {
                base = "dense" + std::to_string(i);
                wcount = l.in * l.out;
                bcount = l.out;
            } else if (l.kind == LayerKind::kConv2d) {
                base = "conv" + std::to_string(i);
                wcount = l.out * l.in * l.k * l.k;
                bcount = l.out;
            } else {
                continue;
            }
            segs.push_back({base + ".weight", off, wcount, true, static_cast<int>(i)});
            off += wcount;
            segs.push_back({base + ".bias", off, bcount, false, static_cast<int>(i)});
            off += bcount;
        }
        return segs;
    }

    // Shape of layer outputs given the per-example input shape; throws on an
    // inconsistent stack. Index -1 = input.
    Shape output_shape() const {
        Shape cur = input_shape;
        for (size_t i = 0; i < layers.size(); ++i) cur = shape_after(cur, layers[i], i);
        return cur;
    }

    static Shape shape_after(const Shape& cur, const LayerSpec& l, size_t i) {
        auto fail = [&](const std::string& why) {
            throw ConfigError("layer " + std::to_string(i) + ": " + why + " (input " +
                              shape_str(cur) + ")");
        };
        switch (l.kind) {
            case LayerKind::kDense:
                if (cur.size() != 1) fail("dense expects a flat input; add a flatten layer");
                if (cur[0] != l.in) fail("dense expects " + std::to_string(l.in) + " features");
                return {l.out};
            case LayerKind::kConv2d: {
                if (cur.size() != 3) fail("conv expects [C,H,W]");
                if (cur[0] != l.in) fail("conv expects " + std::to_string(l.in) + " channels");
                int64_t oh = cur[1] + 2 * l.pad - l.k + 1;
                int64_t ow = cur[2] + 2 * l.pad - l.k + 1;
                if (oh < 1 || ow < 1) fail("kernel larger than padded input");
                return {l.out, oh, ow};
            }
            case LayerKind::kRelu:
                return cur;
            case LayerKind::kAvgPool:
                if (cur.size() != 3) fail("avg_pool expects [C,H,W]");
                if (cur[1] % l.k != 0 || cur[2] % l.k != 0) fail("pool window must divide size");
                return {cur[0], cur[1] / l.k, cur[2] / l.k};
            case LayerKind::kFlatten:
                return {shape_numel(cur)};
        }
        fail("unknown layer kind");
        return {};
    }

    std::string describe() const {
        std::string s = "input" + shape_str(input_shape);
        for (const auto& l : layers) {
            switch (l.kind) {
                case LayerKind::kDense:
                    s += " dense(" + std::to_string(l.in) + "," + std::to_string(l.out) + ")";
                    break;
                case LayerKind::kConv2d:
                    s += " conv(" + std::to_string(l.in) + "," + std::to_string(l.out) + ",k" +
                         std::to_string(l.k) + ",p" + std::to_string(l.pad) + ")";
                    break;
                case LayerKind::kRelu:
                    s += " relu";
                    break;
                case LayerKind::kAvgPool:
                    s += " avgpool(" + std::to_string(l.k) + ")";
                    break;
                case LayerKind::kFlatten:
                    s += " flatten";
                    break;
            }
        }
        return s;
    }

    uint64_t hash() const { return fnv1a64(describe()); }

    bool operator==(const Arch& o) const {
        return input_shape == o.input_shape && describe() == o.describe();
    }
};

// Two-layer-style MLP: flat input -> hidden dense+relu blocks -> logits.
inline Arch make_mlp(int64_t in_dim, const std::vector<int64_t>& hidden, int64_t classes) {
    Arch a;
    a.input_shape = {in_dim};
    int64_t cur = in_dim;
    for (int64_t h : hidden) {
        a.layers.push_back(LayerSpec::dense(cur, h));
        a.layers.push_back(LayerSpec::relu());
        cur = h;
    }
    a.layers.push_back(LayerSpec::dense(cur, classes));
    return a;
}

// Three conv-relu-pool blocks followed by a linear head.
inline Arch make_convnet3(const Shape& input_chw, const std::vector<int64_t>& channels,
                          int64_t kernel, int64_t classes) {
    if (input_chw.size() != 3) throw ConfigError("convnet3 needs a [C,H,W] input shape");
    if (channels.size() != 3) throw ConfigError("convnet3 needs exactly 3 channel counts");
    Arch a;
    a.input_shape = input_chw;
    Shape cur = input_chw;
    int64_t pad = (kernel - 1) / 2;
    for (size_t i = 0; i < 3; ++i) {
        a.layers.push_back(LayerSpec::conv2d(cur[0], channels[i], kernel, pad));
        a.layers.push_back(LayerSpec::relu());
        cur = {channels[i], cur[1], cur[2]};
        if (cur[1] % 2 == 0 && cur[2] % 2 == 0 && cur[1] >= 2 && cur[2] >= 2) {
            a.layers.push_back(LayerSpec::avg_pool(2));
            cur = {cur[0], cur[1] / 2, cur[2] / 2};
        }
    }
    a.layers.push_back(LayerSpec::flatten());
    a.layers.push_back(LayerSpec::dense(shape_numel(cur), classes));
    return a;
}

// Flat parameter vector plus the metadata needed to rebuild or rewind it.
// epoch_tag = k means "weights as of end of epoch k"; 0 is initialization.
struct ModelState {
    std::vector<float> params;
    Arch arch;
    uint64_t init_seed = 0;
    int epoch_tag = 0;

    int64_t param_count() const { return static_cast<int64_t>(params.size()); }
};

// He-uniform weights, zero biases. Each segment draws from its own keyed
// stream so the result is independent of traversal details.
inline ModelState init_state(const Arch& arch, uint64_t init_seed) {
    ModelState s;
    s.arch = arch;
    s.init_seed = init_seed;
    s.epoch_tag = 0;
    s.params.assign(static_cast<size_t>(arch.param_count()), 0.0f);
    arch.output_shape();  // validates the stack
    auto segs = arch.segments();
    for (size_t si = 0; si < segs.size(); ++si) {
        const ParamSegment& seg = segs[si];
        if (!seg.prunable) continue;  // biases stay zero
        const LayerSpec& l = arch.layers[static_cast<size_t>(seg.layer_index)];
        int64_t fan_in = (l.kind == LayerKind::kDense) ? l.in : l.in * l.k * l.k;
        double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
        Rng rng(mix_key(init_seed, static_cast<uint64_t>(si)));
        for (int64_t i = 0; i < seg.count; ++i)
            s.params[static_cast<size_t>(seg.offset + i)] =
                static_cast<float>(rng.uniform(-limit, limit));
    }
    return s;
}

}  // namespace prunelab
