#include "datacube/numfmt.hpp"

#include <array>
#include <charconv>
#include <cstdio>

namespace datacube {

std::string format_shortest(double value) {
  if (value == 0.0) return "0";
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc{}) return "nan";
  return std::string(buf.data(), end);
}

std::string format_significant(double value, int digits) {
  std::array<char, 64> buf{};
  int n = std::snprintf(buf.data(), buf.size(), "%#.*g", digits, value);
  std::string out(buf.data(), static_cast<std::size_t>(n));
  // "%#g" keeps a bare trailing point for integral values ("100000.").
  if (!out.empty() && out.back() == '.') out.pop_back();
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) noexcept {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string to_hex(std::uint64_t value) {
  std::array<char, 17> buf{};
  std::snprintf(buf.data(), buf.size(), "%016llx",
                static_cast<unsigned long long>(value));
  return std::string(buf.data(), 16);
}

}  // namespace datacube
