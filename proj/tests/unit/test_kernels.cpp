#include <vector>

#include "doctest.h"
#include "pdet/core/rng.hpp"
#include "pdet/kernels/kernels.hpp"

using namespace pdet;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("active kernel table matches CPU features") {
  const auto& k = kernels::active();
  if (kernels::cpu_has_avx2() && kernels::avx2_table() != nullptr) {
    CHECK((k.name == "avx2" || k.name == "scalar"));
  } else {
    CHECK(k.name == "scalar");
  }
}

TEST_CASE("simd kernels agree with the scalar reference") {
  const kernels::KernelTable* simd = kernels::avx2_table();
  if (simd == nullptr || !kernels::cpu_has_avx2()) {
    MESSAGE("no AVX2 on this host; equivalence test skipped");
    return;
  }
  const auto& ref = kernels::scalar_table();
  Rng rng(7);
  for (std::size_t n : {1u, 3u, 4u, 7u, 8u, 15u, 16u, 33u, 1000u}) {
    auto x = random_vec(n, rng), y = random_vec(n, rng);
    CHECK(std::abs(ref.dot(x.data(), y.data(), n) - simd->dot(x.data(), y.data(), n)) < 1e-12 * n);
    CHECK(std::abs(ref.sum(x.data(), n) - simd->sum(x.data(), n)) < 1e-12 * n);
    std::vector<double> o1(n), o2(n);
    ref.add(x.data(), y.data(), o1.data(), n);
    simd->add(x.data(), y.data(), o2.data(), n);
    CHECK(o1 == o2);
    ref.sub(x.data(), y.data(), o1.data(), n);
    simd->sub(x.data(), y.data(), o2.data(), n);
    CHECK(o1 == o2);
    ref.mul(x.data(), y.data(), o1.data(), n);
    simd->mul(x.data(), y.data(), o2.data(), n);
    CHECK(o1 == o2);
    ref.scale(0.37, x.data(), o1.data(), n);
    simd->scale(0.37, x.data(), o2.data(), n);
    CHECK(o1 == o2);
    o1 = y;
    o2 = y;
    ref.axpy(-1.3, x.data(), o1.data(), n);
    simd->axpy(-1.3, x.data(), o2.data(), n);
    CHECK(max_abs_diff(o1, o2) < 1e-15);
  }
}

TEST_CASE("simd gemm agrees with the scalar reference for every layout") {
  const kernels::KernelTable* simd = kernels::avx2_table();
  if (simd == nullptr || !kernels::cpu_has_avx2()) return;
  const auto& ref = kernels::scalar_table();
  Rng rng(11);
  for (std::size_t m : {1u, 3u, 4u, 9u, 17u}) {
    for (std::size_t n : {1u, 5u, 8u, 13u, 24u}) {
      for (std::size_t k : {1u, 2u, 7u, 32u}) {
        for (bool trans_a : {false, true}) {
          for (bool acc : {false, true}) {
            auto a = random_vec(m * k, rng), b = random_vec(k * n, rng);
            auto c0 = random_vec(m * n, rng);
            auto c1 = c0;
            const std::size_t rs = trans_a ? 1 : k, cs = trans_a ? m : 1;
            ref.gemm(m, n, k, a.data(), rs, cs, b.data(), n, c0.data(), n, acc);
            simd->gemm(m, n, k, a.data(), rs, cs, b.data(), n, c1.data(), n, acc);
            CHECK(max_abs_diff(c0, c1) < 1e-13 * static_cast<double>(k + 1));
          }
        }
      }
    }
  }
}
