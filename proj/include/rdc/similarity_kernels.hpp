#pragma once

#include <cmath>
#include <cstddef>
#include <span>

// Scoring kernels over a row-major matrix of embeddings. The parallel kernel
// splits rows across OpenMP threads; every score is produced by the same
// sequential dot product as the serial kernel, so both are bit-identical.

namespace rdc::kernels {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

inline double l2_norm(std::span<const double> a) {
  double sum = 0.0;
  for (double v : a) sum += v * v;
  return std::sqrt(sum);
}

inline double cosine_with_norms(std::span<const double> a, double norm_a, std::span<const double> b, double norm_b) {
  return dot(a, b) / (norm_a * norm_b);
}

void score_rows_serial(std::span<const double> matrix, std::size_t dim, std::span<const double> row_norms,
                       std::span<const double> query, double query_norm, std::span<double> out);

void score_rows_parallel(std::span<const double> matrix, std::size_t dim, std::span<const double> row_norms,
                         std::span<const double> query, double query_norm, std::span<double> out);

}  // namespace rdc::kernels
