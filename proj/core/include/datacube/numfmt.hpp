#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace datacube {

// Shortest decimal text that parses back to the same double. Negative zero
// is rendered as "0" so that equal values always render identically.
std::string format_shortest(double value);

// printf-style "%#.{digits}g": fixed significant digits, trailing zeros kept.
std::string format_significant(double value, int digits);

// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t seed = 0xcbf29ce484222325ULL) noexcept;

std::string to_hex(std::uint64_t value);

}  // namespace datacube
