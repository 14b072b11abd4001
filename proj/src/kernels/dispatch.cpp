#include <atomic>
#include <cstdlib>
#include <string>

#include "car/error.hpp"
#include "kernel_tables.hpp"

namespace car::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(CAR_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend initial_backend() {
  const bool avx2 = cpu_has_avx2();
  if (const char* env = std::getenv("CAR_KERNELS")) {
    const std::string choice(env);
    if (choice == "scalar") return Backend::kScalar;
    if (choice == "avx2" && avx2) return Backend::kAvx2;
  }
  return avx2 ? Backend::kAvx2 : Backend::kScalar;
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> active{&table(initial_backend())};
  return active;
}

std::atomic<Backend>& current_backend() {
  static std::atomic<Backend> backend{initial_backend()};
  return backend;
}

}  // namespace

bool backend_supported(Backend backend) {
  return backend == Backend::kScalar || cpu_has_avx2();
}

const KernelTable& table(Backend backend) {
  if (backend == Backend::kAvx2) {
#if defined(CAR_HAVE_AVX2)
    if (cpu_has_avx2()) return detail::avx2_table();
#endif
    throw ValidationError("kernel backend avx2 is not supported on this CPU");
  }
  return detail::scalar_table();
}

Backend active_backend() { return current_backend().load(std::memory_order_relaxed); }

void set_backend(Backend backend) {
  const KernelTable& t = table(backend);
  current().store(&t, std::memory_order_relaxed);
  current_backend().store(backend, std::memory_order_relaxed);
}

std::string_view backend_name(Backend backend) {
  return backend == Backend::kAvx2 ? "avx2" : "scalar";
}

double weighted_sq_distance(std::span<const double> x, std::span<const double> mean,
                            std::span<const double> inv_var) {
  return current().load(std::memory_order_relaxed)
      ->weighted_sq_distance(x.data(), mean.data(), inv_var.data(), x.size());
}

double sum(std::span<const double> values) {
  return current().load(std::memory_order_relaxed)->sum(values.data(), values.size());
}

MeanVariance mean_variance(std::span<const double> values) {
  if (values.empty()) return {};
  const KernelTable* t = current().load(std::memory_order_relaxed);
  const double n = static_cast<double>(values.size());
  const double mean = t->sum(values.data(), values.size()) / n;
  return {mean, t->sum_sq_dev(values.data(), values.size(), mean) / n};
}

std::size_t count_equal(std::span<const std::int32_t> a, std::span<const std::int32_t> b) {
  return current().load(std::memory_order_relaxed)->count_equal(a.data(), b.data(), a.size());
}

}  // namespace car::kernels
