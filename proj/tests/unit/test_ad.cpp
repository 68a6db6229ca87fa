#include <cmath>
#include <numeric>

#include "doctest.h"
#include "gradcheck.hpp"
#include "naive_dft.hpp"
#include "pdet/ad/ops.hpp"
#include "pdet/core/error.hpp"

using namespace pdet;
using ad::Shape;
using ad::Tensor;
using testing::grad_check;
using testing::random_tensor;

namespace {

std::vector<double> vec(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

double max_abs(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("elementwise arithmetic") {
  ad::TapeScope scope;
  Tensor a = Tensor::from({2}, {1, 2});
  Tensor b = Tensor::from({2}, {3, 4});
  CHECK(vec(ad::add(a, b)) == std::vector<double>{4, 6});
  CHECK(vec(ad::sub(a, b)) == std::vector<double>{-2, -2});
  CHECK(vec(ad::mul(a, b)) == std::vector<double>{3, 8});
  CHECK(vec(ad::scale(a, 3.0)) == std::vector<double>{3, 6});
}

TEST_CASE("multiplying by zero annihilates value and gradient") {
  ad::TapeScope scope;
  Tensor x = Tensor::from({3}, {1.5, -2, 7}, true);
  Tensor y = ad::mul(x, Tensor::full({3}, 0.0));
  CHECK(vec(y) == std::vector<double>{0, 0, 0});
  ad::backward(ad::sum(y));
  CHECK(vec(Tensor::from({3}, {x.grad().begin(), x.grad().end()})) ==
        std::vector<double>{0, 0, 0});
}

TEST_CASE("broadcast add matches a loop-based oracle, forward and backward") {
  Rng rng(3);
  Tensor a = random_tensor({2, 1}, rng);
  Tensor b = random_tensor({1, 3}, rng);
  std::vector<double> w(6);
  for (double& v : w) v = rng.uniform(-1, 1);
  ad::TapeScope scope;
  Tensor c = ad::add(a, b);
  REQUIRE(c.shape() == Shape{2, 3});
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(c.at({i, j}) == a.data()[i] + b.data()[j]);
    }
  }
  ad::backward(ad::sum(ad::mul(c, Tensor::from({2, 3}, w))));
  REQUIRE(a.grad().size() == 2);
  REQUIRE(b.grad().size() == 3);
  for (std::size_t i = 0; i < 2; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 3; ++j) s += w[i * 3 + j];
    CHECK(a.grad()[i] == doctest::Approx(s).epsilon(1e-14));
  }
  for (std::size_t j = 0; j < 3; ++j) {
    double s = 0;
    for (std::size_t i = 0; i < 2; ++i) s += w[i * 3 + j];
    CHECK(b.grad()[j] == doctest::Approx(s).epsilon(1e-14));
  }
}

TEST_CASE("incompatible shapes raise an error naming both") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4});
  try {
    ad::add(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[4]") != std::string::npos);
  }
}

TEST_CASE("matmul values") {
  ad::TapeScope scope;
  Tensor eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor v = Tensor::from({3, 1}, {2, -1, 5});
  CHECK(vec(ad::matmul(eye, v)) == vec(v));
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from({2, 1}, {5, 6});
  CHECK(vec(ad::matmul(a, b)) == std::vector<double>{17, 39});
  CHECK(vec(ad::matmul(a, a, true, false)) == std::vector<double>{10, 14, 14, 20});
  CHECK(vec(ad::matmul(a, a, false, true)) == std::vector<double>{5, 11, 11, 25});
  CHECK_THROWS_AS(ad::matmul(a, Tensor::zeros({3, 2})), ShapeError);
}

TEST_CASE("matmul gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    auto r = grad_check([](const std::vector<Tensor>& in) { return ad::matmul(in[0], in[1]); },
                        {random_tensor({4, 5}, rng), random_tensor({5, 3}, rng)}, seed);
    CHECK(r.max_rel_error < 1e-6);
    // batched, broadcast, transposed
    auto rb = grad_check(
        [](const std::vector<Tensor>& in) { return ad::matmul(in[0], in[1], true, true); },
        {random_tensor({2, 3, 5, 4}, rng), random_tensor({3, 6, 5}, rng)}, seed);
    CHECK(rb.max_rel_error < 1e-6);
    auto rl = grad_check(
        [](const std::vector<Tensor>& in) { return ad::linear(in[0], in[1], in[2]); },
        {random_tensor({3, 7, 5}, rng), random_tensor({4, 5}, rng), random_tensor({4}, rng)},
        seed);
    CHECK(rl.max_rel_error < 1e-6);
  }
}

TEST_CASE("conv_nd block sums, selector kernel and errors") {
  ad::TapeScope scope;
  Tensor x = Tensor::full({1, 4}, 1.0);
  Tensor k = Tensor::full({1, 1, 2}, 1.0);
  Tensor y = ad::conv_nd(x, k);
  CHECK(y.shape() == Shape{1, 2});
  CHECK(vec(y) == std::vector<double>{2, 2});

  Rng rng(5);
  Tensor x2 = random_tensor({2, 6, 4}, rng, 1.0, false);
  Tensor sel = Tensor::zeros({1, 2, 3, 2});
  sel.mutable_data()[1 * 6 + 0] = 1.0;  // channel 1, patch corner (0, 0)
  Tensor y2 = ad::conv_nd(x2, sel);
  REQUIRE(y2.shape() == Shape{1, 2, 2});
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 2; ++j) CHECK(y2.at({0, i, j}) == x2.at({1, 3 * i, 2 * j}));
  }
  CHECK_THROWS_AS(ad::conv_nd(Tensor::zeros({1, 5}), k), ShapeError);
}

TEST_CASE("deconv_nd impulse response and orthonormal round trip") {
  ad::TapeScope scope;
  Rng rng(9);
  Tensor k = random_tensor({1, 2, 3}, rng, 1.0, false);
  Tensor impulse = Tensor::zeros({1, 3});
  impulse.mutable_data()[1] = 1.0;
  Tensor y = ad::deconv_nd(impulse, k);
  REQUIRE(y.shape() == Shape{2, 9});
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t j = 0; j < 9; ++j) {
      const double expect = (j >= 3 && j < 6) ? k.at({0, c, j - 3}) : 0.0;
      CHECK(y.at({c, j}) == expect);
    }
  }

  // 2 input channels, patch 2 -> 4 outputs; a rotation-like orthonormal basis
  const double s = 0.5;
  Tensor q = Tensor::from({4, 2, 2}, {s, s, s, s, s, -s, s, -s, s, s, -s, -s, s, -s, -s, s});
  Tensor x = random_tensor({2, 8}, rng, 1.0, false);
  Tensor back = ad::deconv_nd(ad::conv_nd(x, q), q);
  CHECK(max_abs(vec(back), vec(x)) < 1e-14);
}

TEST_CASE("conv_nd and deconv_nd are adjoint") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    ad::NoGradGuard ng;
    Tensor k = random_tensor({3, 2, 4, 2}, rng, 1.0, false);
    Tensor x = random_tensor({2, 8, 6}, rng, 1.0, false);
    Tensor y = random_tensor({3, 2, 3}, rng, 1.0, false);
    const double lhs = ad::sum(ad::mul(ad::conv_nd(x, k), y)).item();
    const double rhs = ad::sum(ad::mul(x, ad::deconv_nd(y, k))).item();
    CHECK(std::abs(lhs - rhs) < 1e-10);
  }
}

TEST_CASE("conv/deconv gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    auto rc = grad_check(
        [](const std::vector<Tensor>& in) { return ad::conv_nd(in[0], in[1], in[2]); },
        {random_tensor({2, 8, 4}, rng), random_tensor({3, 2, 4, 2}, rng), random_tensor({3}, rng)},
        seed);
    CHECK(rc.max_rel_error < 1e-6);
    auto rd = grad_check(
        [](const std::vector<Tensor>& in) { return ad::deconv_nd(in[0], in[1], in[2]); },
        {random_tensor({3, 2, 2}, rng), random_tensor({3, 2, 4, 2}, rng), random_tensor({2}, rng)},
        seed);
    CHECK(rd.max_rel_error < 1e-6);
  }
}

TEST_CASE("layernorm statistics") {
  ad::TapeScope scope;
  Tensor x = Tensor::full({2, 8}, 3.0);
  Tensor g = Tensor::full({8}, 1.7);
  Tensor b = Tensor::from({8}, {0, 1, 2, 3, 4, 5, 6, 7});
  Tensor y = ad::layernorm(x, g, b, 1e-5);
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t j = 0; j < 8; ++j) CHECK(y.at({r, j}) == doctest::Approx(b.data()[j]));
  }
  Rng rng(1);
  Tensor z = random_tensor({4, 16}, rng, 3.0, false);
  Tensor yn = ad::layernorm(z, Tensor::full({16}, 1.0), Tensor::zeros({16}), 1e-12);
  for (std::size_t r = 0; r < 4; ++r) {
    double m = 0, v = 0;
    for (std::size_t j = 0; j < 16; ++j) m += yn.at({r, j});
    m /= 16;
    for (std::size_t j = 0; j < 16; ++j) v += (yn.at({r, j}) - m) * (yn.at({r, j}) - m);
    v /= 16;
    CHECK(std::abs(m) < 1e-12);
    CHECK(std::abs(v - 1.0) < 1e-9);
  }
}

TEST_CASE("softmax and gelu") {
  ad::TapeScope scope;
  CHECK(vec(ad::softmax(Tensor::from({2}, {0, 0}))) == std::vector<double>{0.5, 0.5});
  Rng rng(2);
  Tensor x = random_tensor({3, 5}, rng, 4.0, false);
  Tensor shifted = ad::add_scalar(x, 123.0);
  CHECK(max_abs(vec(ad::softmax(x)), vec(ad::softmax(shifted))) < 1e-14);
  Tensor s0 = ad::softmax(x, 0);
  for (std::size_t j = 0; j < 5; ++j) {
    double col = 0;
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(s0.at({i, j}) >= 0.0);
      col += s0.at({i, j});
    }
    CHECK(std::abs(col - 1.0) < 1e-12);
  }
  CHECK(ad::gelu(Tensor::scalar(0.0)).item() == 0.0);
  CHECK(ad::gelu(Tensor::scalar(1.0)).item() ==
        doctest::Approx(0.5 * (1 + std::tanh(std::sqrt(2 / M_PI) * 1.044715))));
}

TEST_CASE("nn primitive gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    auto rl = grad_check(
        [](const std::vector<Tensor>& in) { return ad::layernorm(in[0], in[1], in[2], 1e-5); },
        {random_tensor({3, 6}, rng), random_tensor({6}, rng), random_tensor({6}, rng)}, seed);
    CHECK(rl.max_rel_error < 1e-5);
    auto rs = grad_check([](const std::vector<Tensor>& in) { return ad::softmax(in[0], 1); },
                         {random_tensor({2, 5, 3}, rng, 2.0)}, seed);
    CHECK(rs.max_rel_error < 1e-5);
    auto rg = grad_check([](const std::vector<Tensor>& in) { return ad::gelu(in[0]); },
                         {random_tensor({17}, rng, 3.0)}, seed);
    CHECK(rg.max_rel_error < 1e-5);
    auto rp = grad_check(
        [](const std::vector<Tensor>& in) {
          return ad::concat({ad::slice(ad::permute(in[0], {2, 0, 1}), 1, 1, 3), in[1]}, 1);
        },
        {random_tensor({3, 4, 2}, rng), random_tensor({2, 5, 4}, rng)}, seed);
    CHECK(rp.max_rel_error < 1e-6);
  }
}

TEST_CASE("rfft of a constant is a DC spike") {
  ad::TapeScope scope;
  Tensor x = Tensor::full({8}, 2.5);
  Tensor s = ad::rfft(x);
  REQUIRE(s.shape() == Shape{5, 2});
  CHECK(s.at({0, 0}) == doctest::Approx(20.0));
  for (std::size_t k = 0; k < 5; ++k) {
    if (k) CHECK(std::abs(s.at({k, 0})) < 1e-13);
    CHECK(std::abs(s.at({k, 1})) < 1e-13);
  }
  CHECK_THROWS_AS(ad::rfft(Tensor::zeros({12})), ShapeError);
}

TEST_CASE("rfft matches a naive DFT; round trips invert") {
  Rng rng(4);
  Tensor x = random_tensor({16}, rng, 1.0, false);
  ad::TapeScope scope;
  Tensor s = ad::rfft(x);
  std::vector<testing::cplx> xc(x.data().begin(), x.data().end());
  auto ref = testing::naive_dft(xc);
  for (std::size_t k = 0; k <= 8; ++k) {
    CHECK(std::abs(s.at({k, 0}) - ref[k].real()) < 1e-9);
    CHECK(std::abs(s.at({k, 1}) - ref[k].imag()) < 1e-9);
  }
  for (std::size_t n = 2; n <= 4096; n *= 2) {
    Tensor y = random_tensor({3, n}, rng, 1.0, false);
    CHECK(max_abs(vec(ad::irfft(ad::rfft(y), n)), vec(y)) < 1e-10);
  }

  Tensor f2 = random_tensor({8, 4}, rng, 1.0, false);
  Tensor s2 = ad::rfft(f2, 2);
  REQUIRE(s2.shape() == Shape{8, 3, 2});
  auto ref2 = testing::naive_dft2(vec(f2), 8, 4);
  for (std::size_t kx = 0; kx < 8; ++kx) {
    for (std::size_t ky = 0; ky < 3; ++ky) {
      CHECK(std::abs(s2.at({kx, ky, 0}) - ref2[kx * 4 + ky].real()) < 1e-9);
      CHECK(std::abs(s2.at({kx, ky, 1}) - ref2[kx * 4 + ky].imag()) < 1e-9);
    }
  }
  CHECK(max_abs(vec(ad::irfft(s2, 4, 2)), vec(f2)) < 1e-12);
}

TEST_CASE("spectral transform gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    auto r1 = grad_check([](const std::vector<Tensor>& in) { return ad::rfft(in[0]); },
                         {random_tensor({2, 16}, rng)}, seed);
    CHECK(r1.max_rel_error < 1e-6);
    auto r2 = grad_check([](const std::vector<Tensor>& in) { return ad::irfft(in[0], 16); },
                         {random_tensor({2, 9, 2}, rng)}, seed);
    CHECK(r2.max_rel_error < 1e-6);
    auto r3 = grad_check([](const std::vector<Tensor>& in) { return ad::rfft(in[0], 2); },
                         {random_tensor({2, 4, 8}, rng)}, seed);
    CHECK(r3.max_rel_error < 1e-6);
    auto r4 = grad_check([](const std::vector<Tensor>& in) { return ad::irfft(in[0], 8, 2); },
                         {random_tensor({2, 4, 5, 2}, rng)}, seed);
    CHECK(r4.max_rel_error < 1e-6);
  }
}

TEST_CASE("backward basics") {
  Rng rng(8);
  Tensor x = random_tensor({5}, rng);
  {
    ad::TapeScope scope;
    ad::backward(ad::sum(x));
  }
  CHECK(vec(Tensor::from({5}, {x.grad().begin(), x.grad().end()})) ==
        std::vector<double>(5, 1.0));
  x.zero_grad();
  {
    ad::TapeScope scope;
    ad::backward(ad::sum(ad::mul(x, x)));
  }
  for (std::size_t i = 0; i < 5; ++i) CHECK(x.grad()[i] == 2.0 * x.data()[i]);

  // repeated backward without reset accumulates
  {
    ad::TapeScope scope;
    ad::backward(ad::sum(ad::mul(x, x)));
  }
  for (std::size_t i = 0; i < 5; ++i) CHECK(x.grad()[i] == 4.0 * x.data()[i]);

  Tensor frozen = random_tensor({5}, rng, 1.0, false);
  {
    ad::TapeScope scope;
    ad::backward(ad::sum(ad::mul(x, frozen)));
  }
  CHECK_FALSE(frozen.has_grad());

  ad::TapeScope scope;
  CHECK_THROWS_AS(ad::backward(ad::mul(x, x)), ShapeError);
}

TEST_CASE("tape nodes only reference earlier nodes") {
  Rng rng(12);
  Tensor w = random_tensor({4, 4}, rng);
  Tensor x = random_tensor({3, 4}, rng, 1.0, false);
  ad::TapeScope scope;
  Tensor h = ad::gelu(ad::linear(x, w, Tensor()));
  Tensor loss = ad::mean(ad::softmax(ad::matmul(h, h, false, true)));
  auto& tape = ad::Tape::current();
  REQUIRE(tape.size() > 0);
  for (std::size_t i = 0; i < tape.size(); ++i) {
    CHECK(tape.node(i).output->node_id == static_cast<std::int64_t>(i));
    for (const auto& in : tape.node(i).inputs) CHECK(in->node_id < static_cast<std::int64_t>(i));
  }
}

TEST_CASE("graph replay is bit-deterministic") {
  auto run = [] {
    Rng rng(99);
    Tensor w = random_tensor({6, 6}, rng);
    Tensor x = random_tensor({4, 6}, rng, 1.0, false);
    ad::TapeScope scope;
    Tensor y = ad::layernorm(ad::gelu(ad::linear(x, w, Tensor())), Tensor::full({6}, 1.0),
                             Tensor::zeros({6}));
    Tensor loss = ad::sum(ad::mul(y, y));
    ad::backward(loss);
    std::vector<double> out = vec(y);
    out.insert(out.end(), w.grad().begin(), w.grad().end());
    return out;
  };
  CHECK(run() == run());
}
