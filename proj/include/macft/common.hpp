#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace macft {

// Build a message from stream-formattable parts.
template <typename... Parts>
std::string strcat_msg(const Parts&... parts) {
    std::ostringstream os;
    (os << ... << parts);
    return os.str();
}

template <typename... Parts>
void check(bool cond, const Parts&... parts) {
    if (!cond) {
        throw std::runtime_error(strcat_msg(parts...));
    }
}

// FNV-1a over raw bytes; used for parameter freeze checks and determinism asserts.
inline std::uint64_t hash_bytes(const void* data, std::size_t n, std::uint64_t h = 1469598103934665603ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace macft
