#include "pdet/model/vit.hpp"

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

std::vector<std::size_t> get_sizes(const nlohmann::json& j, const char* key) {
  return j.at(key).get<std::vector<std::size_t>>();
}

}  // namespace

std::vector<std::size_t> ViTConfig::token_grid() const {
  std::vector<std::size_t> g{context / time_patch()};
  for (std::size_t i = 0; i < spatial.size(); ++i) g.push_back(spatial[i] / patch[i]);
  return g;
}

std::size_t ViTConfig::n_tokens() const { return product(token_grid()); }

std::size_t ViTConfig::patch_dim() const { return in_channels * product(patch); }

std::size_t ViTConfig::per_layer_params() const {
  const std::size_t h = hidden, m = mlp_ratio * hidden;
  return 4 * h                 // two layernorms
         + 3 * h * h + 3 * h   // qkv
         + h * h + h           // output projection
         + m * h + m           // mlp in
         + h * m + h;          // mlp out
}

void ViTConfig::validate() const {
  if (spatial.empty() || spatial.size() > 2) throw ConfigError("vit: 1 or 2 spatial axes");
  if (patch.size() != spatial.size() + 1) {
    throw ConfigError("vit: patch needs one extent per spatial axis plus a time extent");
  }
  if (hidden == 0 || heads == 0 || hidden % heads != 0) {
    throw ConfigError("vit: hidden size " + std::to_string(hidden) +
                      " must be a positive multiple of heads " + std::to_string(heads));
  }
  if (context == 0 || time_patch() == 0 || context % time_patch() != 0) {
    throw ConfigError("vit: time patch extent must divide the context length");
  }
  for (std::size_t i = 0; i < spatial.size(); ++i) {
    if (patch[i] == 0 || spatial[i] % patch[i] != 0) {
      throw ConfigError("vit: spatial patch " + std::to_string(patch[i]) +
                        " does not divide grid extent " + std::to_string(spatial[i]));
    }
  }
  if (in_channels == 0 || out_channels == 0 || mlp_ratio == 0) {
    throw ConfigError("vit: channel counts and mlp ratio must be positive");
  }
}

nlohmann::json ViTConfig::to_json() const {
  return {{"spatial", spatial},   {"patch", patch},         {"context", context},
          {"in_channels", in_channels}, {"out_channels", out_channels},
          {"recon_channels", recon()},  {"hidden", hidden}, {"layers", layers},
          {"heads", heads},       {"mlp_ratio", mlp_ratio}};
}

ViTConfig ViTConfig::from_json(const nlohmann::json& j) {
  ViTConfig c;
  try {
    c.spatial = get_sizes(j, "spatial");
    c.patch = get_sizes(j, "patch");
    c.context = j.at("context").get<std::size_t>();
    c.in_channels = j.at("in_channels").get<std::size_t>();
    c.out_channels = j.at("out_channels").get<std::size_t>();
    c.recon_channels = j.value("recon_channels", std::size_t{0});
    c.hidden = j.at("hidden").get<std::size_t>();
    c.layers = j.at("layers").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.mlp_ratio = j.value("mlp_ratio", std::size_t{4});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("vit config: ") + e.what());
  }
  c.validate();
  return c;
}

std::size_t count_params(const ViTConfig& cfg) {
  const std::size_t h = cfg.hidden, pd = cfg.patch_dim();
  const std::size_t embed = pd * h + h + cfg.n_tokens() * h;
  const std::size_t readout = h * h + h;
  const std::size_t deconv = h * cfg.recon() * product(cfg.patch) + cfg.recon();
  const std::size_t head = cfg.out_channels * cfg.recon() + cfg.out_channels;
  return embed + cfg.layers * cfg.per_layer_params() + readout + deconv + head;
}

ViT::ViT(const ViTConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t h = cfg_.hidden, m = cfg_.mlp_ratio * h;
  add_weight("embed.w", {h, cfg_.patch_dim()});
  add_weight("embed.b", {h});
  add_weight("pos", {cfg_.n_tokens(), h});
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    add_weight(p + "ln1.g", {h});
    add_weight(p + "ln1.b", {h});
    add_weight(p + "qkv.w", {3 * h, h});
    add_weight(p + "qkv.b", {3 * h});
    add_weight(p + "proj.w", {h, h});
    add_weight(p + "proj.b", {h});
    add_weight(p + "ln2.g", {h});
    add_weight(p + "ln2.b", {h});
    add_weight(p + "mlp1.w", {m, h});
    add_weight(p + "mlp1.b", {m});
    add_weight(p + "mlp2.w", {h, m});
    add_weight(p + "mlp2.b", {h});
  }
  add_weight("readout.w", {h, h});
  add_weight("readout.b", {h});
  ad::Shape dk{h, cfg_.recon(), cfg_.time_patch()};
  for (std::size_t i = 0; i < cfg_.spatial.size(); ++i) dk.push_back(cfg_.patch[i]);
  add_weight("deconv.w", dk);
  add_weight("deconv.b", {cfg_.recon()});
  add_weight("head.w", {cfg_.out_channels, cfg_.recon()});
  add_weight("head.b", {cfg_.out_channels});
}

void ViT::init(std::uint64_t seed) {
  Rng rng(seed);
  for (auto& w : weights_) {
    auto d = w.tensor.mutable_data();
    const auto& n = w.name;
    const bool is_gain = n.ends_with(".g");
    const bool is_bias = n.ends_with(".b") && !is_gain;
    if (n.starts_with("head.") || is_bias) {
      std::fill(d.begin(), d.end(), 0.0);
    } else if (is_gain) {
      std::fill(d.begin(), d.end(), 1.0);
    } else {
      for (auto& v : d) v = rng.truncated_normal(0.02);
    }
  }
}

std::unique_ptr<Model> ViT::clone() const {
  auto m = std::make_unique<ViT>(cfg_);
  clone_weights_into(*m);
  return m;
}

EncoderWeights ViT::layer(std::size_t i) const {
  const auto* w = &weights_[3 + 12 * i];
  return {w[0].tensor, w[1].tensor, w[2].tensor, w[3].tensor,  w[4].tensor,  w[5].tensor,
          w[6].tensor, w[7].tensor, w[8].tensor, w[9].tensor, w[10].tensor, w[11].tensor};
}

Tensor encoder_layer(const Tensor& x, const EncoderWeights& w, std::size_t heads,
                     Tensor* attention) {
  const std::size_t n = x.dim(0), h = x.dim(1), dh = h / heads;
  if (w.qkv_w.dim(1) != h) throw ShapeError("encoder: token width does not match weights");

  Tensor y = ad::layernorm(x, w.ln1_g, w.ln1_b);
  Tensor qkv = ad::linear(y, w.qkv_w, w.qkv_b);
  auto split_heads = [&](std::size_t part) {
    Tensor t = ad::slice(qkv, -1, part * h, (part + 1) * h);
    return ad::permute(ad::reshape(t, {n, heads, dh}), {1, 0, 2});
  };
  Tensor q = split_heads(0), k = split_heads(1), v = split_heads(2);
  Tensor scores = ad::scale(ad::matmul(q, k, false, true), 1.0 / std::sqrt(double(dh)));
  Tensor att = ad::softmax(scores, -1);
  if (attention) *attention = att;
  Tensor ctx = ad::reshape(ad::permute(ad::matmul(att, v), {1, 0, 2}), {n, h});
  Tensor x1 = ad::add(x, ad::linear(ctx, w.proj_w, w.proj_b));

  Tensor y2 = ad::layernorm(x1, w.ln2_g, w.ln2_b);
  Tensor mlp = ad::linear(ad::gelu(ad::linear(y2, w.mlp1_w, w.mlp1_b)), w.mlp2_w, w.mlp2_b);
  return ad::add(x1, mlp);
}

Tensor ViT::patchify(const Tensor& context) const {
  ad::Shape expect{cfg_.context, cfg_.in_channels};
  expect.insert(expect.end(), cfg_.spatial.begin(), cfg_.spatial.end());
  if (context.shape() != expect) {
    throw ShapeError("vit: context " + ad::to_string(context.shape()) + " does not match " +
                     ad::to_string(expect));
  }
  std::vector<std::size_t> perm{1, 0};
  for (std::size_t i = 0; i < cfg_.spatial.size(); ++i) perm.push_back(2 + i);
  std::vector<std::size_t> patch{cfg_.time_patch()};
  for (std::size_t i = 0; i < cfg_.spatial.size(); ++i) patch.push_back(cfg_.patch[i]);
  Tensor rows = ad::extract_patches(ad::permute(context, perm), patch);
  Tensor tokens = ad::linear(rows, weights_[0].tensor, weights_[1].tensor);
  return ad::add(tokens, weights_[2].tensor);
}

Tensor ViT::forward(const Tensor& context) const {
  Tensor x = patchify(context);
  for (std::size_t l = 0; l < cfg_.layers; ++l) x = encoder_layer(x, layer(l), cfg_.heads);
  x = ad::linear(x, ctail(0), ctail(1));

  ad::Shape grid{cfg_.hidden};
  for (auto g : cfg_.token_grid()) grid.push_back(g);
  Tensor vol = ad::deconv_nd(ad::reshape(ad::transpose(x), grid), ctail(2), ctail(3));

  // vol is [C', k, S...]; keep the last time slice.
  const std::size_t cells = product(cfg_.spatial);
  Tensor last = ad::reshape(ad::slice(vol, 1, cfg_.context - 1, cfg_.context),
                            {cfg_.recon(), cells});
  Tensor out = ad::transpose(ad::linear(ad::transpose(last), ctail(4), ctail(5)));
  ad::Shape shape{cfg_.out_channels};
  shape.insert(shape.end(), cfg_.spatial.begin(), cfg_.spatial.end());
  return ad::reshape(out, shape);
}

}  // namespace pdet
