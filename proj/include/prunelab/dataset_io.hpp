#pragma once

#include <string>

#include <json.hpp>

#include "prunelab/dataset.hpp"
#include "prunelab/io.hpp"

namespace prunelab {

// On-disk dataset container: a directory holding manifest.json plus raw
// little-endian blobs features.f32 and labels.i64.
inline void save_dataset(const fs::path& dir, const LabeledDataset& ds,
                         const nlohmann::json& provenance = {}) {
    ds.validate();
    fs::create_directories(dir);
    nlohmann::json m;
    m["shape"] = ds.features.shape;
    m["role"] = role_name(ds.role);
    m["ipc"] = ds.ipc;
    m["class_count"] = ds.class_count;
    if (!provenance.is_null() && !provenance.empty()) m["provenance"] = provenance;
    atomic_write(dir / "manifest.json", m.dump(2) + "\n");
    atomic_write_vec(dir / "features.f32", ds.features.values);
    atomic_write_vec(dir / "labels.i64", ds.labels);
}

inline LabeledDataset load_dataset(const fs::path& dir) {
    nlohmann::json m = nlohmann::json::parse(read_file(dir / "manifest.json"), nullptr, false);
    if (m.is_discarded()) throw FormatError((dir / "manifest.json").string() + ": unparseable JSON");
    LabeledDataset ds;
    Shape shape = m.at("shape").get<Shape>();
    std::vector<float> feats = read_vec<float>(dir / "features.f32");
    if (static_cast<int64_t>(feats.size()) != shape_numel(shape))
        throw FormatError(dir.string() + ": features.f32 has " + std::to_string(feats.size()) +
                          " floats, manifest shape wants " + std::to_string(shape_numel(shape)));
    ds.features = Tensor(shape, std::move(feats));
    ds.labels = read_vec<int64_t>(dir / "labels.i64");
    ds.role = role_from_name(m.at("role").get<std::string>());
    ds.ipc = m.at("ipc").get<int64_t>();
    ds.class_count = m.at("class_count").get<int64_t>();
    ds.validate();
    return ds;
}

}  // namespace prunelab
