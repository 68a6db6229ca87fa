#include <cmath>
#include <cstring>
#include <numbers>

#include "doctest.h"
#include "gradcheck.hpp"
#include "naive_dft.hpp"
#include "pdet/ad/ops.hpp"
#include "pdet/core/error.hpp"
#include "pdet/model/checkpoint.hpp"
#include "pdet/model/fno.hpp"
#include "pdet/model/vit.hpp"

using namespace pdet;
using ad::Tensor;
using testing::random_tensor;

namespace {

ViTConfig tiny_vit(std::size_t layers = 1) {
  ViTConfig c;
  c.spatial = {16};
  c.patch = {4, 1};
  c.context = 4;
  c.in_channels = 3;
  c.out_channels = 1;
  c.hidden = 16;
  c.layers = layers;
  c.heads = 2;
  return c;
}

FNOConfig tiny_fno() {
  FNOConfig c;
  c.spatial = {16};
  c.context = 4;
  c.in_channels = 3;
  c.out_channels = 1;
  c.modes = 4;
  c.width = 4;
  c.layers = 2;
  c.projection = 8;
  return c;
}

Tensor context_for(const Model& m, Rng& rng, bool grad = false) {
  ad::Shape s{m.context_length(), m.in_channels()};
  for (auto e : m.spatial()) s.push_back(e);
  return random_tensor(s, rng, 1.0, grad);
}

void randomize(Model& m, Rng& rng, double scale = 0.3) {
  for (auto& w : m.weights()) {
    for (auto& v : w.tensor.mutable_data()) v = scale * rng.uniform(-1.0, 1.0);
  }
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)) == 0;
}

double max_abs(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Tensor mse(const Tensor& a, const Tensor& b) {
  Tensor d = ad::sub(a, b);
  return ad::mean(ad::mul(d, d));
}

}  // namespace

TEST_CASE("vit token counts") {
  ViTConfig c;
  c.spatial = {256};
  c.patch = {32, 1};
  c.context = 8;
  CHECK(c.n_tokens() == 64);
  c.spatial = {64, 64};
  c.patch = {8, 8, 1};
  c.in_channels = 8;
  CHECK(c.n_tokens() == 512);

  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    ViTConfig r;
    const bool two_d = rng.uniform() < 0.5;
    r.spatial.clear();
    r.patch.clear();
    std::size_t expect = 1;
    for (int a = 0; a < (two_d ? 2 : 1); ++a) {
      const std::size_t p = std::size_t{1} << rng.uniform_int(0, 4);
      const std::size_t g = std::size_t(rng.uniform_int(1, 6));
      r.spatial.push_back(p * g);
      r.patch.push_back(p);
      expect *= g;
    }
    const std::size_t pt = std::size_t(rng.uniform_int(1, 3));
    const std::size_t kt = std::size_t(rng.uniform_int(1, 4));
    r.patch.push_back(pt);
    r.context = pt * kt;
    r.hidden = 8;
    r.heads = 2;
    r.validate();
    CHECK(r.n_tokens() == kt * expect);
    ViT m(r);
    Rng in(trial);
    Tensor ctx = context_for(m, in);
    CHECK(m.patchify(ctx).shape() == ad::Shape{kt * expect, 8});
  }

  ViTConfig bad = tiny_vit();
  bad.patch = {5, 1};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = tiny_vit();
  bad.heads = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = tiny_vit();
  bad.patch = {4, 3};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("vit patchify of zero input yields position embeddings") {
  ViT m(tiny_vit());
  m.init(1);
  Tensor zero = Tensor::zeros({4, 3, 16});
  Tensor tok = m.patchify(zero);
  CHECK(bit_equal(tok, m.pos()));
}

TEST_CASE("encoder layer residual identity and attention rows") {
  Rng rng(2);
  const std::size_t h = 8;
  EncoderWeights z{Tensor::zeros({h}), Tensor::zeros({h}), Tensor::zeros({3 * h, h}),
                   Tensor::zeros({3 * h}), Tensor::zeros({h, h}), Tensor::zeros({h}),
                   Tensor::zeros({h}), Tensor::zeros({h}), Tensor::zeros({4 * h, h}),
                   Tensor::zeros({4 * h}), Tensor::zeros({h, 4 * h}), Tensor::zeros({h})};
  Tensor x = random_tensor({5, h}, rng, 1.0, false);
  CHECK(bit_equal(encoder_layer(x, z, 2), x));

  ViTConfig c = tiny_vit();
  c.hidden = h;
  ViT m(c);
  randomize(m, rng);
  Tensor att;
  encoder_layer(random_tensor({1, h}, rng, 1.0, false), m.layer(0), 2, &att);
  CHECK(att.shape() == ad::Shape{2, 1, 1});
  CHECK(att.data()[0] == 1.0);
  CHECK(att.data()[1] == 1.0);

  encoder_layer(random_tensor({7, h}, rng, 2.0, false), m.layer(0), 2, &att);
  for (std::size_t r = 0; r < 14; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < 7; ++j) s += att.data()[r * 7 + j];
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("vit forward contract") {
  Rng rng(3);
  ViT m(tiny_vit(2));
  m.init(5);
  randomize(m, rng);
  Tensor ctx = context_for(m, rng);
  Tensor a = m.forward(ctx), b = m.forward(ctx);
  CHECK(bit_equal(a, b));
  CHECK(a.shape() == ad::Shape{1, 16});

  ViTConfig c2;
  c2.spatial = {8, 16};
  c2.patch = {4, 4, 2};
  c2.context = 4;
  c2.in_channels = 8;
  c2.out_channels = 4;
  c2.hidden = 16;
  c2.layers = 1;
  c2.heads = 4;
  ViT m2(c2);
  m2.init(1);
  CHECK(m2.forward(context_for(m2, rng)).shape() == ad::Shape{4, 8, 16});
  CHECK_THROWS_AS(m2.forward(context_for(m, rng)), ShapeError);
}

TEST_CASE("vit with zero layers is affine") {
  Rng rng(6);
  ViT m(tiny_vit(0));
  randomize(m, rng);
  Tensor x = context_for(m, rng);
  Tensor f0 = m.forward(Tensor::zeros(x.shape()));
  Tensor fx = m.forward(x);
  for (double alpha : {-2.5, 0.3, 7.0}) {
    Tensor fa = m.forward(ad::scale(x, alpha));
    for (std::size_t i = 0; i < fa.numel(); ++i) {
      CHECK(std::abs((fa.data()[i] - f0.data()[i]) - alpha * (fx.data()[i] - f0.data()[i])) <
            1e-9);
    }
  }
}

TEST_CASE("vit parameter counts") {
  for (std::size_t layers : {0u, 1u, 3u}) {
    ViTConfig c = tiny_vit(layers);
    ViT m(c);
    CHECK(m.param_count() == count_params(c));
    ViTConfig d = c;
    d.layers = 2 * layers;
    CHECK(count_params(d) - count_params(c) == layers * c.per_layer_params());
  }
  ViTConfig big;
  big.hidden = 256;
  big.heads = 4;
  big.layers = 1;
  ViT m(big);
  CHECK(m.layer(0).qkv_w.numel() == 3 * 256 * 256);
  CHECK(m.param_count() == count_params(big));
}

TEST_CASE("vit patch round trip with orthonormal kernels") {
  // h equals the patch dimension; embed, readout and deconv are identities,
  // so the L=0 forward returns the last context frame's physical channels.
  ViTConfig c;
  c.spatial = {8, 4};
  c.patch = {2, 2, 1};
  c.context = 3;
  c.in_channels = 3;
  c.out_channels = 2;
  c.layers = 0;
  c.hidden = 12;
  c.heads = 1;
  ViT m(c);
  auto eye = [](Tensor& t) {
    auto d = t.mutable_data();
    std::fill(d.begin(), d.end(), 0.0);
    const std::size_t n = t.dim(0);
    for (std::size_t i = 0; i < n; ++i) d[i * (t.numel() / n) + i] = 1.0;
  };
  eye(m.embed_w());
  eye(m.readout_w());
  eye(m.deconv_w());  // [h, C', 1, 2, 2] flattened: row j selects (c, p) = j
  eye(m.head_w());
  Rng rng(7);
  Tensor ctx = context_for(m, rng);
  Tensor out = m.forward(ctx);
  for (std::size_t ch = 0; ch < 2; ++ch) {
    for (std::size_t s = 0; s < 32; ++s) {
      CHECK(out.data()[ch * 32 + s] == ctx.data()[(2 * 3 + ch) * 32 + s]);
    }
  }
}

TEST_CASE("vit output depends on the parameter channel") {
  Rng rng(8);
  ViT m(tiny_vit(1));
  randomize(m, rng);
  Tensor ctx = context_for(m, rng);
  Tensor other = Tensor::from(ctx.shape(), std::vector<double>(ctx.data().begin(), ctx.data().end()));
  auto d = other.mutable_data();
  for (std::size_t f = 0; f < 4; ++f) {
    for (std::size_t s = 0; s < 16; ++s) d[(f * 3 + 1) * 16 + s] += 0.5;
  }
  CHECK(max_abs(m.forward(ctx).data(), m.forward(other).data()) > 0.0);
}

TEST_CASE("vit end-to-end gradients match finite differences") {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    ViT m(tiny_vit(1));
    randomize(m, rng, 0.5);
    Tensor ctx = context_for(m, rng);
    Tensor target = random_tensor({1, 16}, rng, 1.0, false);
    std::vector<Tensor> ws;
    for (auto& w : m.weights()) ws.push_back(w.tensor);
    auto r = testing::grad_check(
        [&](const std::vector<Tensor>&) { return mse(m.forward(ctx), target); }, ws, seed);
    worst = std::max(worst, r.max_rel_error);
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("spectral_conv identity, constants and naive DFT oracle") {
  Rng rng(9);
  const std::size_t n = 32, w = 3;
  Tensor x = random_tensor({w, n}, rng, 1.0, false);
  Tensor id = Tensor::zeros({w, w, n / 2 + 1, 2});
  for (std::size_t i = 0; i < w; ++i) {
    for (std::size_t k = 0; k <= n / 2; ++k) id.mutable_data()[((i * w + i) * (n / 2 + 1) + k) * 2] = 1.0;
  }
  CHECK(max_abs(spectral_conv(x, id, n / 2 + 1).data(), x.data()) < 1e-10);

  Tensor wr = random_tensor({w, w, 5, 2}, rng, 1.0, false);
  Tensor c = Tensor::full({w, n}, 0.7);
  Tensor yc = spectral_conv(c, wr, 5);
  for (std::size_t o = 0; o < w; ++o) {
    for (std::size_t i = 1; i < n; ++i) CHECK(std::abs(yc.data()[o * n + i] - yc.data()[o * n]) < 1e-12);
  }

  Tensor y = spectral_conv(x, wr, 5);
  std::vector<std::vector<testing::cplx>> spec(w);
  for (std::size_t i = 0; i < w; ++i) {
    std::vector<testing::cplx> row(n);
    for (std::size_t j = 0; j < n; ++j) row[j] = x.data()[i * n + j];
    spec[i] = testing::naive_dft(row);
  }
  for (std::size_t o = 0; o < w; ++o) {
    std::vector<testing::cplx> out(n, 0.0);
    for (std::size_t k = 0; k < 5; ++k) {
      testing::cplx acc = 0.0;
      for (std::size_t i = 0; i < w; ++i) {
        const std::size_t base = ((i * w + o) * 5 + k) * 2;
        acc += spec[i][k] * testing::cplx(wr.data()[base], wr.data()[base + 1]);
      }
      out[k] = acc;
      if (k > 0) out[n - k] = std::conj(acc);
    }
    out[0] = out[0].real();
    const auto back = testing::naive_dft(out, true);
    for (std::size_t j = 0; j < n; ++j) CHECK(std::abs(back[j].real() - y.data()[o * n + j]) < 1e-9);
  }

  CHECK_THROWS_AS(spectral_conv(x, Tensor::zeros({w, w, 18, 2}), 18), ShapeError);
}

TEST_CASE("spectral_conv is linear") {
  Rng rng(10);
  Tensor wr = random_tensor({4, 4, 4, 2, 2}, rng, 1.0, false);
  Tensor a = random_tensor({4, 16, 8}, rng, 1.0, false);
  Tensor b = random_tensor({4, 16, 8}, rng, 1.0, false);
  Tensor sum_first = spectral_conv(ad::add(a, b), wr, 2);
  Tensor sum_after = ad::add(spectral_conv(a, wr, 2), spectral_conv(b, wr, 2));
  CHECK(max_abs(sum_first.data(), sum_after.data()) < 1e-9);
}

TEST_CASE("fno forward contract and translation equivariance") {
  Rng rng(11);
  FNO m(tiny_fno());
  m.init(3);
  Tensor ctx = context_for(m, rng);
  CHECK(bit_equal(m.forward(ctx), m.forward(ctx)));
  CHECK(m.forward(ctx).shape() == ad::Shape{1, 16});

  FNOConfig nc = tiny_fno();
  nc.coords = false;
  FNO eq(nc);
  eq.init(4);
  Tensor hist = random_tensor({4, 1, 16}, rng, 1.0, false);
  std::vector<double> shifted(64);
  const std::size_t s = 5;
  for (std::size_t f = 0; f < 4; ++f) {
    for (std::size_t i = 0; i < 16; ++i) shifted[f * 16 + (i + s) % 16] = hist.data()[f * 16 + i];
  }
  Tensor y = eq.forward_state(hist);
  Tensor ys = eq.forward_state(Tensor::from({4, 1, 16}, shifted));
  double err = 0.0;
  for (std::size_t i = 0; i < 16; ++i) err = std::max(err, std::abs(ys.data()[(i + s) % 16] - y.data()[i]));
  CHECK(err < 1e-9);

  FNOConfig c2 = tiny_fno();
  c2.spatial = {16, 8};
  c2.in_channels = 8;
  c2.out_channels = 4;
  c2.modes = 3;
  FNO m2(c2);
  m2.init(2);
  CHECK(m2.forward(context_for(m2, rng)).shape() == ad::Shape{4, 16, 8});

  FNOConfig bad = tiny_fno();
  bad.modes = 9;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("fno gradients match finite differences") {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(100 + seed);
    FNO m(tiny_fno());
    m.init(seed);
    Tensor ctx = context_for(m, rng);
    Tensor target = random_tensor({1, 16}, rng, 1.0, false);
    std::vector<Tensor> ws;
    for (auto& w : m.weights()) ws.push_back(w.tensor);
    auto r = testing::grad_check(
        [&](const std::vector<Tensor>&) { return mse(m.forward(ctx), target); }, ws, seed);
    worst = std::max(worst, r.max_rel_error);
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("checkpoint round trip") {
  Rng rng(12);
  ViT vit(tiny_vit(1));
  vit.init(9);
  randomize(vit, rng);
  NormStats ns{{0.1}, {2.0}, {0.1}, {2.0}};
  Provenance pv;
  pv.dataset_hash = "00ff";
  pv.seed = 77;
  pv.epochs = 3;
  const auto bytes = serialize_checkpoint(vit, ns, pv);
  auto ck = parse_checkpoint(bytes);
  CHECK(ck.model->arch() == "vit");
  CHECK(ck.provenance.seed == 77);
  CHECK(serialize_checkpoint(*ck.model, ck.norm, ck.provenance) == bytes);
  Tensor ctx = context_for(vit, rng);
  CHECK(bit_equal(vit.forward(ctx), ck.model->forward(ctx)));

  FNO fno(tiny_fno());
  fno.init(1);
  auto fk = parse_checkpoint(serialize_checkpoint(fno, ns, pv));
  CHECK(fk.model->arch() == "fno");
  CHECK(bit_equal(fno.forward(ctx), fk.model->forward(ctx)));

  auto bad = bytes;
  bad[1] = 'X';
  CHECK_THROWS_AS(parse_checkpoint(bad), FormatError);
  CHECK_THROWS_AS(parse_checkpoint(bytes.substr(0, bytes.size() - 8)), FormatError);

  auto cl = vit.clone();
  CHECK(bit_equal(cl->forward(ctx), vit.forward(ctx)));
  CHECK(cl->weights()[0].tensor.impl() != vit.weights()[0].tensor.impl());
}
