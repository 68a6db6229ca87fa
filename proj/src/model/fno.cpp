#include "pdet/model/fno.hpp"

#include <cmath>
#include <numeric>

#include "pdet/ad/ops.hpp"
#include "pdet/core/error.hpp"
#include "pdet/core/rng.hpp"

namespace pdet {

using ad::Tensor;

namespace {

std::size_t product(const std::vector<std::size_t>& v) {
  return std::accumulate(v.begin(), v.end(), std::size_t{1}, std::multiplies<>());
}

// Pointwise channel map on [C_in, cells]: w[C_out, C_in] x + b[C_out, 1].
Tensor pointwise(const Tensor& x, const Tensor& w, const Tensor& b) {
  return ad::add(ad::matmul(w, x), b);
}

}  // namespace

std::size_t FNOConfig::lift_in() const {
  return context * out_channels + (coords ? spatial.size() : 0);
}

void FNOConfig::validate() const {
  if (spatial.empty() || spatial.size() > 2) throw ConfigError("fno: 1 or 2 spatial axes");
  for (auto s : spatial) {
    if (s == 0 || (s & (s - 1)) != 0) throw ConfigError("fno: extents must be powers of two");
    if (modes > s / 2) {
      throw ConfigError("fno: " + std::to_string(modes) + " modes exceed Nyquist for extent " +
                        std::to_string(s));
    }
  }
  if (modes == 0 || width == 0 || projection == 0) {
    throw ConfigError("fno: modes, width and projection must be positive");
  }
  if (out_channels == 0 || in_channels < out_channels || context == 0) {
    throw ConfigError("fno: inconsistent channel counts");
  }
}

nlohmann::json FNOConfig::to_json() const {
  return {{"spatial", spatial},   {"context", context},     {"in_channels", in_channels},
          {"out_channels", out_channels}, {"modes", modes}, {"width", width},
          {"layers", layers},     {"lifting", lifting},     {"projection", projection},
          {"coords", coords}};
}

FNOConfig FNOConfig::from_json(const nlohmann::json& j) {
  FNOConfig c;
  try {
    c.spatial = j.at("spatial").get<std::vector<std::size_t>>();
    c.context = j.at("context").get<std::size_t>();
    c.in_channels = j.at("in_channels").get<std::size_t>();
    c.out_channels = j.at("out_channels").get<std::size_t>();
    c.modes = j.at("modes").get<std::size_t>();
    c.width = j.at("width").get<std::size_t>();
    c.layers = j.at("layers").get<std::size_t>();
    c.lifting = j.value("lifting", std::size_t{0});
    c.projection = j.value("projection", std::size_t{128});
    c.coords = j.value("coords", true);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("fno config: ") + e.what());
  }
  c.validate();
  return c;
}

Tensor spectral_conv(const Tensor& x, const Tensor& weights, std::size_t modes) {
  const int naxes = static_cast<int>(x.ndim()) - 1;
  if (naxes < 1 || naxes > 2) throw ShapeError("spectral_conv: expects [width, S...] with 1 or 2 axes");
  const std::size_t n_last = x.dim(-1);
  if (modes > n_last / 2 + 1 || (naxes == 2 && 2 * modes > x.dim(1))) {
    throw ShapeError("spectral_conv: " + std::to_string(modes) + " modes exceed Nyquist");
  }
  std::vector<std::size_t> m(naxes, modes);
  Tensor spec = ad::spectral_mix(ad::rfft(x, naxes), weights, m);
  return ad::irfft(spec, n_last, naxes);
}

FNO::FNO(const FNOConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t w = cfg_.width, rank = cfg_.spatial.size();
  std::size_t cur = cfg_.lift_in();
  if (cfg_.lifting) {
    add_weight("lift0.w", {cfg_.lifting, cur});
    add_weight("lift0.b", {cfg_.lifting, 1});
    cur = cfg_.lifting;
  }
  add_weight("lift.w", {w, cur});
  add_weight("lift.b", {w, 1});
  ad::Shape sw{w, w};
  if (rank == 2) sw.push_back(2 * cfg_.modes);
  sw.push_back(cfg_.modes);
  sw.push_back(2);
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    add_weight(p + "spectral", sw);
    add_weight(p + "bypass.w", {w, w});
    add_weight(p + "bypass.b", {w, 1});
  }
  add_weight("proj1.w", {cfg_.projection, w});
  add_weight("proj1.b", {cfg_.projection, 1});
  add_weight("proj2.w", {cfg_.out_channels, cfg_.projection});
  add_weight("proj2.b", {cfg_.out_channels, 1});

  const std::size_t cells = product(cfg_.spatial);
  std::vector<double> c(rank * cells);
  for (std::size_t i = 0; i < cells; ++i) {
    if (rank == 1) {
      c[i] = double(i) / double(cfg_.spatial[0]);
    } else {
      const std::size_t ny = cfg_.spatial[1];
      c[i] = double(i / ny) / double(cfg_.spatial[0]);
      c[cells + i] = double(i % ny) / double(ny);
    }
  }
  coords_ = Tensor::from({rank, cells}, std::move(c));
}

void FNO::init(std::uint64_t seed) {
  Rng rng(seed);
  for (auto& w : weights_) {
    auto d = w.tensor.mutable_data();
    const auto& s = w.tensor.shape();
    if (w.name.ends_with("spectral")) {
      const double sc = 1.0 / double(s[0] * s[1]);
      for (auto& v : d) v = sc * rng.uniform();
      continue;
    }
    // Biases share the fan-in of their matrix, which precedes them.
    const std::size_t fan_in =
        w.name.ends_with(".w") ? s[1] : (&w)[-1].tensor.shape()[1];
    const double bound = 1.0 / std::sqrt(double(fan_in));
    for (auto& v : d) v = rng.uniform(-bound, bound);
  }
}

std::unique_ptr<Model> FNO::clone() const {
  auto m = std::make_unique<FNO>(cfg_);
  clone_weights_into(*m);
  return m;
}

const Tensor& FNO::spectral_weight(std::size_t layer) const {
  const std::size_t base = cfg_.lifting ? 4 : 2;
  return weights_[base + 3 * layer].tensor;
}

Tensor FNO::forward(const Tensor& context) const {
  ad::Shape expect{cfg_.context, cfg_.in_channels};
  expect.insert(expect.end(), cfg_.spatial.begin(), cfg_.spatial.end());
  if (context.shape() != expect) {
    throw ShapeError("fno: context " + ad::to_string(context.shape()) + " does not match " +
                     ad::to_string(expect));
  }
  return forward_state(ad::slice(context, 1, 0, cfg_.out_channels));
}

Tensor FNO::forward_state(const Tensor& history) const {
  const std::size_t cells = product(cfg_.spatial);
  ad::Shape expect{cfg_.context, cfg_.out_channels};
  expect.insert(expect.end(), cfg_.spatial.begin(), cfg_.spatial.end());
  if (history.shape() != expect) {
    throw ShapeError("fno: history " + ad::to_string(history.shape()) + " does not match " +
                     ad::to_string(expect));
  }
  Tensor x = ad::reshape(history, {cfg_.context * cfg_.out_channels, cells});
  if (cfg_.coords) x = ad::concat({x, coords_}, 0);

  std::size_t i = 0;
  auto next = [&]() -> const Tensor& { return weights_[i++].tensor; };
  if (cfg_.lifting) {
    const Tensor& w = next();
    x = ad::gelu(pointwise(x, w, next()));
  }
  {
    const Tensor& w = next();
    x = pointwise(x, w, next());
  }
  ad::Shape field{cfg_.width};
  field.insert(field.end(), cfg_.spatial.begin(), cfg_.spatial.end());
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const Tensor& sw = next();
    const Tensor& bw = next();
    const Tensor& bb = next();
    Tensor spec = ad::reshape(spectral_conv(ad::reshape(x, field), sw, cfg_.modes),
                              {cfg_.width, cells});
    x = ad::gelu(ad::add(spec, pointwise(x, bw, bb)));
  }
  const Tensor& p1w = next();
  x = ad::gelu(pointwise(x, p1w, next()));
  const Tensor& p2w = next();
  x = pointwise(x, p2w, next());
  ad::Shape out{cfg_.out_channels};
  out.insert(out.end(), cfg_.spatial.begin(), cfg_.spatial.end());
  return ad::reshape(x, out);
}

}  // namespace pdet
