#include "pwabc/kde_kernel.hpp"

#include <cmath>

namespace pwabc::detail {

double log_kernel_sum(const double* columns, std::size_t stride, std::size_t m, int d, const double* z,
                      double* scratch) {
  for (std::size_t j = 0; j < m; ++j) scratch[j] = 0.0;
  for (int k = 0; k < d; ++k) {
    const double* col = columns + static_cast<std::size_t>(k) * stride;
    const double zk = z[k];
    for (std::size_t j = 0; j < m; ++j) {
      const double r = col[j] - zk;
      scratch[j] += r * r;
    }
  }
  double q_min = scratch[0];
  for (std::size_t j = 1; j < m; ++j) q_min = scratch[j] < q_min ? scratch[j] : q_min;
  double s = 0.0;
  for (std::size_t j = 0; j < m; ++j) s += std::exp(-0.5 * (scratch[j] - q_min));
  return -0.5 * q_min + std::log(s);
}

}  // namespace pwabc::detail
