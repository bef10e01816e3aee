#ifndef POTRL_FORMAT_HPP_
#define POTRL_FORMAT_HPP_

#include <string>

namespace potrl {

// Shortest decimal that round-trips to the same double. Locale independent,
// so every text artifact is byte-reproducible.
std::string FormatDouble(double value);

// Fixed-point with the given number of decimals.
std::string FormatFixed(double value, int decimals);

}  // namespace potrl

#endif  // POTRL_FORMAT_HPP_
