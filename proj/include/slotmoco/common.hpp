#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace slotmoco {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Malformed files, protocol violations, bad splits. The CLI maps this to exit code 2.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite gradients, degenerate norms. The CLI maps this to exit code 3.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// BIO tag set. Label order is fixed: O < B < I, and ties in decoding prefer
// the smaller index.
enum class Label : int { O = 0, B = 1, I = 2 };

inline constexpr int kNumLabels = 3;

// Shortest round-trip decimal form, locale-independent; keeps CSV and config
// output byte-stable across runs.
inline std::string fmt_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline char label_char(Label l) {
  switch (l) {
    case Label::O: return 'O';
    case Label::B: return 'B';
    case Label::I: return 'I';
  }
  return '?';
}

}  // namespace slotmoco
