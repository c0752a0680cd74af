#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "prunelab/errors.hpp"

namespace prunelab {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats assume a little-endian host");

namespace fs = std::filesystem;

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArtifactError("cannot open " + path.string());
    std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return s;
}

// Write via a temp file in the same directory, then rename. rename(2) is
// atomic on POSIX, which makes per-iteration record updates crash-safe.
inline void atomic_write(const fs::path& path, const void* data, size_t len) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ArtifactError("cannot write " + tmp.string());
        out.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
        if (!out) throw ArtifactError("short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline void atomic_write(const fs::path& path, const std::string& s) {
    atomic_write(path, s.data(), s.size());
}

template <typename T>
void atomic_write_vec(const fs::path& path, const std::vector<T>& v) {
    atomic_write(path, v.data(), v.size() * sizeof(T));
}

template <typename T>
std::vector<T> read_vec(const fs::path& path) {
    std::string raw = read_file(path);
    if (raw.size() % sizeof(T) != 0)
        throw FormatError(path.string() + ": size " + std::to_string(raw.size()) +
                          " is not a multiple of element size");
    std::vector<T> v(raw.size() / sizeof(T));
    std::memcpy(v.data(), raw.data(), raw.size());
    return v;
}

}  // namespace prunelab
