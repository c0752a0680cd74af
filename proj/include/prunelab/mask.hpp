#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "prunelab/arch.hpp"
#include "prunelab/errors.hpp"
#include "prunelab/hash.hpp"
#include "prunelab/io.hpp"

namespace prunelab {

// Binary keep/prune vector aligned to a flat parameter vector. Bits over
// non-prunable segments (biases) are always 1; density and sparsity are
// reported over prunable coordinates only.
struct SparsityMask {
    std::vector<uint8_t> bits;  // 1 = keep, 0 = pruned
    std::vector<ParamSegment> partition;

    int64_t size() const { return static_cast<int64_t>(bits.size()); }

    int64_t prunable_total() const {
        int64_t n = 0;
        for (const auto& s : partition)
            if (s.prunable) n += s.count;
        return n;
    }

    int64_t prunable_surviving() const {
        int64_t n = 0;
        for (const auto& s : partition)
            if (s.prunable)
                for (int64_t i = 0; i < s.count; ++i) n += bits[static_cast<size_t>(s.offset + i)];
        return n;
    }

    double density() const {
        int64_t total = prunable_total();
        return total == 0 ? 1.0 : static_cast<double>(prunable_surviving()) / static_cast<double>(total);
    }

    double sparsity() const { return 1.0 - density(); }

    // Coordinate-wise subset: every kept bit of *this is kept in `outer`.
    bool nested_in(const SparsityMask& outer) const {
        if (bits.size() != outer.bits.size()) return false;
        for (size_t i = 0; i < bits.size(); ++i)
            if (bits[i] && !outer.bits[i]) return false;
        return true;
    }

    void validate() const {
        int64_t expect = 0;
        for (const auto& s : partition) expect = std::max(expect, s.offset + s.count);
        if (static_cast<int64_t>(bits.size()) != expect)
            throw ConfigError("mask bits (" + std::to_string(bits.size()) +
                              ") do not cover the partition (" + std::to_string(expect) + ")");
        for (const auto& s : partition)
            if (!s.prunable)
                for (int64_t i = 0; i < s.count; ++i)
                    if (!bits[static_cast<size_t>(s.offset + i)])
                        throw ConfigError("mask zeros a non-prunable coordinate in " + s.name);
    }

    void apply(std::vector<float>& params) const {
        if (params.size() != bits.size())
            throw ConfigError("mask length " + std::to_string(bits.size()) +
                              " does not match parameter count " + std::to_string(params.size()));
        for (size_t i = 0; i < bits.size(); ++i)
            if (!bits[i]) params[i] = 0.0f;
    }
};

inline SparsityMask make_dense_mask(const Arch& arch) {
    SparsityMask m;
    m.partition = arch.segments();
    m.bits.assign(static_cast<size_t>(arch.param_count()), 1);
    return m;
}

// ---- mask file: 8-byte magic, u32 header length, JSON header, packed bits ----

inline constexpr char kMaskMagic[8] = {'P', 'L', 'M', 'A', 'S', 'K', '0', '1'};

inline void save_mask(const fs::path& path, const SparsityMask& mask, uint64_t arch_hash,
                      const std::string& parent_run_id = "") {
    nlohmann::json header;
    header["arch_hash"] = hex64(arch_hash);
    header["param_count"] = mask.size();
    header["density"] = mask.density();
    header["parent_run_id"] = parent_run_id;
    nlohmann::json part = nlohmann::json::array();
    for (const auto& s : mask.partition)
        part.push_back({{"name", s.name},
                        {"offset", s.offset},
                        {"count", s.count},
                        {"prunable", s.prunable},
                        {"layer", s.layer_index}});
    header["layer_partition"] = part;
    std::string hjson = header.dump();

    std::string blob;
    blob.append(kMaskMagic, sizeof(kMaskMagic));
    uint32_t hlen = static_cast<uint32_t>(hjson.size());
    blob.append(reinterpret_cast<const char*>(&hlen), 4);
    blob.append(hjson);
    std::string packed((mask.bits.size() + 7) / 8, '\0');
    for (size_t i = 0; i < mask.bits.size(); ++i)
        if (mask.bits[i]) packed[i / 8] |= static_cast<char>(1u << (i % 8));
    blob.append(packed);
    atomic_write(path, blob);
}

inline SparsityMask load_mask(const fs::path& path, uint64_t* arch_hash_out = nullptr) {
    std::string raw = read_file(path);
    if (raw.size() < 12 || std::memcmp(raw.data(), kMaskMagic, sizeof(kMaskMagic)) != 0)
        throw FormatError(path.string() + ": bad mask magic");
    uint32_t hlen;
    std::memcpy(&hlen, raw.data() + 8, 4);
    if (raw.size() < 12 + hlen) throw FormatError(path.string() + ": truncated mask header");
    nlohmann::json header = nlohmann::json::parse(raw.substr(12, hlen), nullptr, false);
    if (header.is_discarded()) throw FormatError(path.string() + ": unparseable mask header");

    SparsityMask m;
    int64_t count = header.at("param_count").get<int64_t>();
    for (const auto& j : header.at("layer_partition")) {
        ParamSegment s;
        s.name = j.at("name").get<std::string>();
        s.offset = j.at("offset").get<int64_t>();
        s.count = j.at("count").get<int64_t>();
        s.prunable = j.at("prunable").get<bool>();
        s.layer_index = j.at("layer").get<int>();
        m.partition.push_back(s);
    }
    size_t packed_len = (static_cast<size_t>(count) + 7) / 8;
    if (raw.size() != 12 + hlen + packed_len)
        throw FormatError(path.string() + ": payload size mismatch (count " + std::to_string(count) +
                          ")");
    m.bits.assign(static_cast<size_t>(count), 0);
    const char* packed = raw.data() + 12 + hlen;
    for (int64_t i = 0; i < count; ++i)
        m.bits[static_cast<size_t>(i)] =
            (packed[static_cast<size_t>(i) / 8] >> (i % 8)) & 1 ? 1 : 0;
    m.validate();
    if (arch_hash_out) {
        std::string hs = header.at("arch_hash").get<std::string>();
        *arch_hash_out = std::stoull(hs, nullptr, 16);
    }
    return m;
}

}  // namespace prunelab
