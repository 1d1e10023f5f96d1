#pragma once

#include <cstddef>

namespace pwabc::detail {

/// log sum_j exp(-|z - u_j|^2 / 2) over m whitened points stored column-wise
/// (coordinate k of point j at columns[k * stride + j]). `scratch` holds m doubles.
double log_kernel_sum(const double* columns, std::size_t stride, std::size_t m, int d, const double* z,
                      double* scratch);

}  // namespace pwabc::detail
