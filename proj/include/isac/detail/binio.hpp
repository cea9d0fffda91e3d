#ifndef ISAC_DETAIL_BINIO_HPP
#define ISAC_DETAIL_BINIO_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace isac::detail {

// Little-endian scalar I/O, independent of host byte order.

inline void write_u32_le(std::ostream& os, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xffu);
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t read_u32_le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("artifact: truncated read");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

inline void write_f64_le(std::ostream& os, double d) {
    const uint64_t v = std::bit_cast<uint64_t>(d);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xffu);
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline double read_f64_le(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw std::runtime_error("artifact: truncated read");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(v);
}

inline void write_magic(std::ostream& os, const char magic[4]) { os.write(magic, 4); }

inline void check_magic(std::istream& is, const char magic[4], const char* what) {
    char b[4];
    is.read(b, 4);
    if (!is || std::memcmp(b, magic, 4) != 0) throw std::runtime_error(what);
}

} // namespace isac::detail

#endif
