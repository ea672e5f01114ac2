// SPDX-FileCopyrightText: (c) 2026 The layerfuse Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

// Little-endian scalar I/O shared by the feature and checkpoint formats.
namespace lfuse::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

template <typename T>
inline void write_raw(std::ostream& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.write(buf, sizeof(T));
}

template <typename T>
inline bool read_raw(std::istream& in, T& v) {
    char buf[sizeof(T)];
    if (!in.read(buf, sizeof(T))) return false;
    std::memcpy(&v, buf, sizeof(T));
    return true;
}

inline void write_u32(std::ostream& out, std::uint32_t v) { write_raw(out, v); }
inline void write_u64(std::ostream& out, std::uint64_t v) { write_raw(out, v); }
inline void write_f64(std::ostream& out, double v) { write_raw(out, v); }
inline bool read_u32(std::istream& in, std::uint32_t& v) { return read_raw(in, v); }
inline bool read_u64(std::istream& in, std::uint64_t& v) { return read_raw(in, v); }
inline bool read_f64(std::istream& in, double& v) { return read_raw(in, v); }

inline void write_string(std::ostream& out, const std::string& s) {
    write_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline bool read_string(std::istream& in, std::string& s, std::uint32_t max_len = 1u << 24) {
    std::uint32_t n = 0;
    if (!read_u32(in, n) || n > max_len) return false;
    s.resize(n);
    return static_cast<bool>(in.read(s.data(), n));
}

}  // namespace lfuse::io
