#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace prunelab {

// FNV-1a 64-bit. Used for content hashes (run ids, basis hashes, fixture
// digests) -- stable identifiers, not security.
inline uint64_t fnv1a64(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ULL) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

inline uint64_t fnv1a64(const std::vector<float>& v) {
    return v.empty() ? fnv1a64(nullptr, 0) : fnv1a64(v.data(), v.size() * sizeof(float));
}

inline std::string hex64(uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return s;
}

}  // namespace prunelab
