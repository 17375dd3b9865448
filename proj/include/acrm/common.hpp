#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace acrm {

// Training math runs in 64-bit; 32-bit is used only for feature/checkpoint
// storage (widened on load).
using Real = double;

template <class Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Mat = MatrixX<Real>;
using Mat32 = MatrixX<float>;
using Index = Eigen::Index;

// Raised for malformed or inconsistent input files/annotations. CLI exit code 2.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised when training math degenerates (NaN loss/gradient). CLI exit code 3.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {
inline void format_into(std::ostringstream&) {}

template <class T, class... Rest>
void format_into(std::ostringstream& os, const T& head, const Rest&... rest) {
  os << head;
  format_into(os, rest...);
}
}  // namespace detail

template <class... Args>
std::string cat(const Args&... args) {
  std::ostringstream os;
  os.precision(17);
  detail::format_into(os, args...);
  return os.str();
}

inline std::string shape_str(Index rows, Index cols) {
  return cat("[", rows, "x", cols, "]");
}

inline std::string shape_str(const Mat& m) { return shape_str(m.rows(), m.cols()); }

using Rng = std::mt19937_64;

// Derives an independent, reproducible stream from a master seed and a purpose
// tag, so that e.g. shuffling and dropout never share state.
inline Rng seeded_rng(std::uint64_t seed, std::string_view tag, std::uint64_t k = 0) {
  std::uint64_t h = 0xcbf29ce484222325ull ^ seed;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  h ^= k + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  return Rng(h);
}

inline Mat uniform_matrix(Index rows, Index cols, Real lo, Real hi, Rng& rng) {
  std::uniform_real_distribution<Real> dist(lo, hi);
  Mat m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

inline Mat gaussian_matrix(Index rows, Index cols, Real mean, Real stddev, Rng& rng) {
  std::normal_distribution<Real> dist(mean, stddev);
  Mat m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

}  // namespace acrm
