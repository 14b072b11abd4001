#pragma once

// Data-parallel inner loops shared by the learners, detectors and ensembles.
//
// Every kernel has a scalar reference implementation and, on x86-64, an
// AVX2+FMA variant. The variant is picked once at startup from CPUID; the
// CAR_KERNELS environment variable ("scalar" or "avx2") or set_backend()
// overrides the choice. The two backends agree up to floating-point
// reassociation, which the kernel equivalence tests bound.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace car::kernels {

enum class Backend { kScalar, kAvx2 };

struct MeanVariance {
  double mean = 0.0;
  double variance = 0.0;  // population variance
};

// sum_i (x_i - mean_i)^2 * inv_var_i
double weighted_sq_distance(std::span<const double> x, std::span<const double> mean,
                            std::span<const double> inv_var);

double sum(std::span<const double> values);

// Two-pass mean and population variance. Empty input yields {0, 0}.
MeanVariance mean_variance(std::span<const double> values);

// Number of positions where a[i] == b[i].
std::size_t count_equal(std::span<const std::int32_t> a, std::span<const std::int32_t> b);

Backend active_backend();
bool backend_supported(Backend backend);
// Throws ValidationError if the backend is not supported on this CPU.
void set_backend(Backend backend);
std::string_view backend_name(Backend backend);

// Direct access to a specific backend, used by the equivalence tests and the
// kernel benchmark. Each table entry mirrors the dispatched function above.
struct KernelTable {
  double (*weighted_sq_distance)(const double* x, const double* mean, const double* inv_var,
                                 std::size_t n);
  double (*sum)(const double* values, std::size_t n);
  double (*sum_sq_dev)(const double* values, std::size_t n, double mean);
  std::size_t (*count_equal)(const std::int32_t* a, const std::int32_t* b, std::size_t n);
};

const KernelTable& table(Backend backend);

}  // namespace car::kernels
