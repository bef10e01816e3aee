#include "potrl/format.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <stdexcept>

namespace potrl {

std::string FormatDouble(double value) {
  if (value == 0.0) return "0";  // also folds -0
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc()) throw std::runtime_error("FormatDouble: to_chars failed");
  return std::string(buf.data(), ptr);
}

std::string FormatFixed(double value, int decimals) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value,
                                 std::chars_format::fixed, decimals);
  if (ec != std::errc()) throw std::runtime_error("FormatFixed: to_chars failed");
  std::string out(buf.data(), ptr);
  // "-0.00" reads badly in tables
  if (out.front() == '-' && out.find_first_not_of("-0.") == std::string::npos) {
    out.erase(0, 1);
  }
  return out;
}

}  // namespace potrl
