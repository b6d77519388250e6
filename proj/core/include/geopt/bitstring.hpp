#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "geopt/errors.hpp"

namespace geopt {

/// Binary variable assignment, one byte per variable (values 0 or 1).
using Bitstring = std::vector<std::uint8_t>;

inline int hamming_weight(const Bitstring& x) noexcept {
  int w = 0;
  for (auto b : x) w += b;
  return w;
}

inline std::string to_string(const Bitstring& x) {
  std::string s(x.size(), '0');
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i]) s[i] = '1';
  return s;
}

inline Bitstring bitstring_from_string(std::string_view s) {
  Bitstring x(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '0') {
      x[i] = 0;
    } else if (s[i] == '1') {
      x[i] = 1;
    } else {
      throw invalid_argument("bitstring_from_string: character is not 0 or 1");
    }
  }
  return x;
}

/// Bitstring for `index` over n variables; bit i of the index maps to x[i].
inline Bitstring bitstring_from_index(std::uint64_t index, int n_vars) {
  Bitstring x(static_cast<std::size_t>(n_vars));
  for (int i = 0; i < n_vars; ++i) x[static_cast<std::size_t>(i)] = (index >> i) & 1u;
  return x;
}

}  // namespace geopt
