#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>

#include "entprog/errors.hpp"

namespace entprog {

/// Single sample (flattened image, condition vector, noise).
using Vector = Eigen::VectorXd;
/// Batch of samples, one per column; also used for every weight and bias.
using Matrix = Eigen::MatrixXd;

inline void require_same_shape(const Matrix& a, const Matrix& b, const std::string& what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(what + ": shape " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                     " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

/// FNV-1a over the raw bytes of a matrix, folded into `h`.
inline std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t digest(const Matrix& m, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const std::int64_t dims[2] = {m.rows(), m.cols()};
  h = fnv1a(dims, sizeof(dims), h);
  return fnv1a(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()), h);
}

}  // namespace entprog
