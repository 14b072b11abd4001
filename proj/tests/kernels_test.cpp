#include "car/kernels.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "car/error.hpp"

namespace car::kernels {
namespace {

std::vector<double> random_values(std::mt19937_64& rng, std::size_t n, double scale) {
  std::normal_distribution<double> d(0.0, scale);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

class BackendRestore : public ::testing::Test {
 protected:
  void SetUp() override { saved_ = active_backend(); }
  void TearDown() override { set_backend(saved_); }
  Backend saved_{};
};

TEST(KernelsScalar, WeightedSqDistanceMatchesDefinition) {
  const auto& t = table(Backend::kScalar);
  const double x[] = {1.0, 2.0, -3.0};
  const double mu[] = {0.0, 1.0, 1.0};
  const double iv[] = {2.0, 0.5, 0.25};
  EXPECT_DOUBLE_EQ(t.weighted_sq_distance(x, mu, iv, 3), 2.0 + 0.5 + 4.0);
  EXPECT_EQ(t.weighted_sq_distance(x, mu, iv, 0), 0.0);
}

TEST(KernelsScalar, MeanVarianceTwoPass) {
  const std::vector<double> v{0.6, 0.8, 0.6, 0.8};
  set_backend(Backend::kScalar);
  const MeanVariance mv = mean_variance(v);
  EXPECT_NEAR(mv.mean, 0.7, 1e-15);
  EXPECT_NEAR(mv.variance, 0.01, 1e-15);
  const MeanVariance empty = mean_variance({});
  EXPECT_EQ(empty.mean, 0.0);
  EXPECT_EQ(empty.variance, 0.0);
}

TEST(KernelsScalar, CountEqual) {
  const std::vector<std::int32_t> a{0, 1, 2, 3, 4};
  const std::vector<std::int32_t> b{0, 0, 2, 0, 4};
  set_backend(Backend::kScalar);
  EXPECT_EQ(count_equal(a, b), 3u);
}

TEST(KernelsDispatch, ScalarAlwaysSupported) {
  EXPECT_TRUE(backend_supported(Backend::kScalar));
  EXPECT_EQ(backend_name(Backend::kScalar), "scalar");
  EXPECT_EQ(backend_name(Backend::kAvx2), "avx2");
}

TEST_F(BackendRestore, SetBackendSwitchesActiveTable) {
  set_backend(Backend::kScalar);
  EXPECT_EQ(active_backend(), Backend::kScalar);
  if (backend_supported(Backend::kAvx2)) {
    set_backend(Backend::kAvx2);
    EXPECT_EQ(active_backend(), Backend::kAvx2);
  } else {
    EXPECT_THROW(set_backend(Backend::kAvx2), ValidationError);
  }
}

// Equivalence of the SIMD variants with the scalar reference, over lengths
// that exercise every remainder of the vector loops.
class KernelEquivalence : public ::testing::Test {
 protected:
  void SetUp() override {
    if (!backend_supported(Backend::kAvx2)) GTEST_SKIP() << "AVX2 not available";
  }
  const KernelTable& ref_ = table(Backend::kScalar);
  const KernelTable& simd_ = table(Backend::kAvx2);
};

TEST_F(KernelEquivalence, WeightedSqDistance) {
  std::mt19937_64 rng(11);
  for (std::size_t n = 0; n <= 67; ++n) {
    for (int rep = 0; rep < 20; ++rep) {
      auto x = random_values(rng, n, 5.0);
      auto mu = random_values(rng, n, 5.0);
      auto iv = random_values(rng, n, 1.0);
      for (double& v : iv) v = std::abs(v) + 1e-3;
      double magnitude = 0.0;
      for (std::size_t i = 0; i < n; ++i) magnitude += (x[i] - mu[i]) * (x[i] - mu[i]) * iv[i];
      const double a = ref_.weighted_sq_distance(x.data(), mu.data(), iv.data(), n);
      const double b = simd_.weighted_sq_distance(x.data(), mu.data(), iv.data(), n);
      EXPECT_NEAR(a, b, 1e-13 * (magnitude + 1.0)) << "n=" << n;
    }
  }
}

TEST_F(KernelEquivalence, SumAndSquaredDeviation) {
  std::mt19937_64 rng(12);
  for (std::size_t n = 0; n <= 131; ++n) {
    const auto v = random_values(rng, n, 3.0);
    double abs_sum = 0.0;
    for (double x : v) abs_sum += std::abs(x);
    EXPECT_NEAR(ref_.sum(v.data(), n), simd_.sum(v.data(), n), 1e-14 * (abs_sum + 1.0));
    const double mean = n ? ref_.sum(v.data(), n) / static_cast<double>(n) : 0.0;
    const double a = ref_.sum_sq_dev(v.data(), n, mean);
    const double b = simd_.sum_sq_dev(v.data(), n, mean);
    EXPECT_NEAR(a, b, 1e-13 * (a + 1.0));
  }
}

TEST_F(KernelEquivalence, CountEqualIsExact) {
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<std::int32_t> label(0, 3);
  for (std::size_t n = 0; n <= 100; ++n) {
    std::vector<std::int32_t> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = label(rng);
      b[i] = label(rng);
    }
    EXPECT_EQ(ref_.count_equal(a.data(), b.data(), n), simd_.count_equal(a.data(), b.data(), n));
  }
}

TEST_F(KernelEquivalence, DispatchedFunctionsAgreeAcrossBackends) {
  const Backend saved = active_backend();
  std::mt19937_64 rng(14);
  const auto v = random_values(rng, 1000, 0.2);
  set_backend(Backend::kScalar);
  const MeanVariance s = mean_variance(v);
  set_backend(Backend::kAvx2);
  const MeanVariance d = mean_variance(v);
  set_backend(saved);
  EXPECT_NEAR(s.mean, d.mean, 1e-15);
  EXPECT_NEAR(s.variance, d.variance, 1e-15);
}

}  // namespace
}  // namespace car::kernels
