#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

// Code-point aware helpers for UTF-8 strings. All span arithmetic in the
// data model is in code points, not bytes; these convert between the two.
// Decoding is permissive: a malformed lead byte counts as one code point.

namespace ctxfaith::utf8 {

inline std::size_t seq_len(unsigned char lead) {
    if (lead < 0x80) return 1;
    if ((lead >> 5) == 0x06) return 2;
    if ((lead >> 4) == 0x0E) return 3;
    if ((lead >> 3) == 0x1E) return 4;
    return 1;
}

inline std::size_t cp_count(std::string_view s) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < s.size(); i += seq_len(static_cast<unsigned char>(s[i]))) ++n;
    return n;
}

// Byte offset of the code point at index `cp`. cp == cp_count(s) maps to s.size().
inline std::size_t byte_offset(std::string_view s, std::size_t cp) {
    std::size_t i = 0, seen = 0;
    while (i < s.size() && seen < cp) {
        i += seq_len(static_cast<unsigned char>(s[i]));
        ++seen;
    }
    if (seen < cp) throw std::out_of_range("utf8: code-point index " + std::to_string(cp) +
                                           " past end of string (" + std::to_string(seen) + " code points)");
    return i;
}

inline std::string_view slice(std::string_view s, std::size_t cp_start, std::size_t cp_end) {
    if (cp_end < cp_start) throw std::out_of_range("utf8: slice end before start");
    std::size_t b = byte_offset(s, cp_start);
    std::size_t e = byte_offset(s, cp_end);
    return s.substr(b, e - b);
}

inline std::string replace_range(std::string_view s, std::size_t cp_start, std::size_t cp_end,
                                 std::string_view repl) {
    std::size_t b = byte_offset(s, cp_start);
    std::size_t e = byte_offset(s, cp_end);
    std::string out;
    out.reserve(s.size() - (e - b) + repl.size());
    out.append(s.substr(0, b));
    out.append(repl);
    out.append(s.substr(e));
    return out;
}

constexpr std::size_t npos = static_cast<std::size_t>(-1);

// First occurrence of `needle`, reported as a code-point index.
inline std::size_t find_cp(std::string_view haystack, std::string_view needle) {
    std::size_t b = haystack.find(needle);
    if (b == std::string_view::npos) return npos;
    return cp_count(haystack.substr(0, b));
}

}  // namespace ctxfaith::utf8
