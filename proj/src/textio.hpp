// SPDX-License-Identifier: Apache-2.0
//
// Whitespace-separated token I/O shared by the stream and checkpoint formats.
// Doubles are written with 17 significant digits and parsed with from_chars,
// which round-trips every finite double exactly.
#pragma once

#include <charconv>
#include <cstdio>
#include <istream>
#include <ostream>
#include <string>

#include "oliera/error.hpp"
#include "oliera/tensor.hpp"

namespace oliera::textio {

inline std::string format_double(double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(n));
}

/// Writes rows of a tensor, one line per row.
inline void write_rows(std::ostream& os, const Tensor& t) {
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) {
      if (c) os << ' ';
      os << format_double(t(r, c));
    }
    os << '\n';
  }
}

class TokenReader {
 public:
  TokenReader(std::istream& is, std::string what) : is_(is), what_(std::move(what)) {}

  std::string word() {
    std::string tok;
    if (!(is_ >> tok)) throw FormatError(what_ + ": unexpected end of file (truncated?)");
    return tok;
  }

  void expect(const std::string& keyword) {
    const std::string tok = word();
    if (tok != keyword) throw FormatError(what_ + ": expected '" + keyword + "', found '" + tok + "'");
  }

  template <typename Int>
  Int integer() {
    const std::string tok = word();
    Int v{};
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
      throw FormatError(what_ + ": malformed integer '" + tok + "'");
    }
    return v;
  }

  double real() {
    const std::string tok = word();
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
      throw FormatError(what_ + ": malformed number '" + tok + "'");
    }
    return v;
  }

  Tensor matrix(std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0) throw FormatError(what_ + ": zero-sized matrix");
    Tensor t({rows, cols});
    for (double& v : t.data()) v = real();
    return t;
  }

 private:
  std::istream& is_;
  std::string what_;
};

}  // namespace oliera::textio
