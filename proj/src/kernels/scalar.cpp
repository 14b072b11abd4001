#include "kernel_tables.hpp"

namespace car::kernels::detail {
namespace {

double weighted_sq_distance(const double* x, const double* mean, const double* inv_var,
                            std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - mean[i];
    acc += d * d * inv_var[i];
  }
  return acc;
}

double sum(const double* values, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += values[i];
  return acc;
}

double sum_sq_dev(const double* values, std::size_t n, double mean) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = values[i] - mean;
    acc += d * d;
  }
  return acc;
}

std::size_t count_equal(const std::int32_t* a, const std::int32_t* b, std::size_t n) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) count += (a[i] == b[i]) ? 1 : 0;
  return count;
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable kTable{&weighted_sq_distance, &sum, &sum_sq_dev, &count_equal};
  return kTable;
}

}  // namespace car::kernels::detail
