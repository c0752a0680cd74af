#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prunelab/dataset.hpp"
#include "prunelab/io.hpp"

namespace prunelab {

namespace detail {

inline uint32_t read_be32(const std::string& raw, size_t off, const std::string& what) {
    if (off + 4 > raw.size()) throw FormatError("IDX: truncated while reading " + what);
    return (static_cast<uint32_t>(static_cast<unsigned char>(raw[off])) << 24) |
           (static_cast<uint32_t>(static_cast<unsigned char>(raw[off + 1])) << 16) |
           (static_cast<uint32_t>(static_cast<unsigned char>(raw[off + 2])) << 8) |
           static_cast<uint32_t>(static_cast<unsigned char>(raw[off + 3]));
}

}  // namespace detail

// Reads an IDX image/label file pair (big-endian, magic 0x00000803 for
// images and 0x00000801 for labels). Pixels are scaled from [0, 255] to
// [0, 1]; feature shape is (1, rows, cols).
inline LabeledDataset load_idx(const fs::path& images_path, const fs::path& labels_path) {
    std::string img = read_file(images_path);
    std::string lab = read_file(labels_path);

    uint32_t img_magic = detail::read_be32(img, 0, "image magic");
    if (img_magic != 0x00000803u)
        throw FormatError("IDX: bad image magic 0x" + hex64(img_magic).substr(8) + " in " +
                          images_path.string());
    uint32_t lab_magic = detail::read_be32(lab, 0, "label magic");
    if (lab_magic != 0x00000801u)
        throw FormatError("IDX: bad label magic 0x" + hex64(lab_magic).substr(8) + " in " +
                          labels_path.string());

    uint32_t n_img = detail::read_be32(img, 4, "image count");
    uint32_t rows = detail::read_be32(img, 8, "row count");
    uint32_t cols = detail::read_be32(img, 12, "column count");
    uint32_t n_lab = detail::read_be32(lab, 4, "label count");
    if (n_img != n_lab)
        throw FormatError("IDX: image count " + std::to_string(n_img) + " != label count " +
                          std::to_string(n_lab));
    if (n_img == 0) throw FormatError("IDX: image count is zero");

    size_t need_img = 16 + static_cast<size_t>(n_img) * rows * cols;
    if (img.size() < need_img)
        throw FormatError("IDX: truncated image payload (" + std::to_string(img.size()) + " < " +
                          std::to_string(need_img) + " bytes)");
    size_t need_lab = 8 + static_cast<size_t>(n_lab);
    if (lab.size() < need_lab)
        throw FormatError("IDX: truncated label payload (" + std::to_string(lab.size()) + " < " +
                          std::to_string(need_lab) + " bytes)");

    LabeledDataset ds;
    ds.features = Tensor({static_cast<int64_t>(n_img), 1, static_cast<int64_t>(rows),
                          static_cast<int64_t>(cols)});
    for (size_t i = 0; i < static_cast<size_t>(n_img) * rows * cols; ++i)
        ds.features.values[i] = static_cast<float>(static_cast<unsigned char>(img[16 + i])) / 255.0f;

    ds.labels.resize(n_lab);
    int64_t max_label = 0;
    for (size_t i = 0; i < n_lab; ++i) {
        ds.labels[i] = static_cast<int64_t>(static_cast<unsigned char>(lab[8 + i]));
        max_label = std::max(max_label, ds.labels[i]);
    }
    ds.class_count = max_label + 1;
    ds.role = Role::kRealTrain;

    // ipc only when the file happens to be exactly class-balanced
    std::vector<int64_t> counts(static_cast<size_t>(ds.class_count), 0);
    for (int64_t y : ds.labels) counts[static_cast<size_t>(y)]++;
    bool balanced = true;
    for (int64_t c : counts) balanced &= (c == counts[0]);
    ds.ipc = balanced ? counts[0] : 0;
    ds.validate();
    return ds;
}

}  // namespace prunelab
