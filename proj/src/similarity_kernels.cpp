#include "rdc/similarity_kernels.hpp"

#include <cstdint>

namespace rdc::kernels {

void score_rows_serial(std::span<const double> matrix, std::size_t dim, std::span<const double> row_norms,
                       std::span<const double> query, double query_norm, std::span<double> out) {
  for (std::size_t r = 0; r < out.size(); ++r) {
    out[r] = cosine_with_norms(query, query_norm, matrix.subspan(r * dim, dim), row_norms[r]);
  }
}

void score_rows_parallel(std::span<const double> matrix, std::size_t dim, std::span<const double> row_norms,
                         std::span<const double> query, double query_norm, std::span<double> out) {
  const auto rows = static_cast<std::int64_t>(out.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < rows; ++r) {
    const auto row = static_cast<std::size_t>(r);
    out[row] = cosine_with_norms(query, query_norm, matrix.subspan(row * dim, dim), row_norms[row]);
  }
}

}  // namespace rdc::kernels
