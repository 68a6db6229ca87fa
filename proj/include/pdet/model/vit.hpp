#pragma once

#include <cstdint>
#include <vector>

#include "json.hpp"
#include "pdet/ad/tensor.hpp"
#include "pdet/model/model.hpp"

namespace pdet {

struct ViTConfig {
  std::vector<std::size_t> spatial{256};
  std::vector<std::size_t> patch{32, 1};  // spatial extents..., time extent
  std::size_t context = 8;                // k
  std::size_t in_channels = 3;            // C + P + 1
  std::size_t out_channels = 1;           // C
  std::size_t recon_channels = 0;         // C' of the deconv volume; 0 = in_channels
  std::size_t hidden = 256;
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;

  std::size_t recon() const { return recon_channels ? recon_channels : in_channels; }
  std::size_t time_patch() const { return patch.back(); }
  // Grid of patches, time first: [k / pt, S1 / p1, ...].
  std::vector<std::size_t> token_grid() const;
  std::size_t n_tokens() const;
  std::size_t patch_dim() const;  // in_channels * pt * prod(p)
  std::size_t per_layer_params() const;

  void validate() const;
  nlohmann::json to_json() const;
  static ViTConfig from_json(const nlohmann::json& j);
};

std::size_t count_params(const ViTConfig& cfg);

struct EncoderWeights {
  ad::Tensor ln1_g, ln1_b, qkv_w, qkv_b, proj_w, proj_b;
  ad::Tensor ln2_g, ln2_b, mlp1_w, mlp1_b, mlp2_w, mlp2_b;
};

// x <- x + MHSA(LN(x)); x <- x + MLP(LN(x)). If `attention` is non-null it
// receives the softmax weights [heads, n, n].
ad::Tensor encoder_layer(const ad::Tensor& x, const EncoderWeights& w, std::size_t heads,
                         ad::Tensor* attention = nullptr);

class ViT final : public Model {
 public:
  explicit ViT(const ViTConfig& cfg);

  // Truncated normal (std 0.02) projections and position embeddings,
  // unit layernorm gains, zero biases and zero head.
  void init(std::uint64_t seed);

  const ViTConfig& config() const { return cfg_; }

  // [k, C_in, S...] -> tokens [n_tokens, h], position embeddings added.
  ad::Tensor patchify(const ad::Tensor& context) const;
  ad::Tensor forward(const ad::Tensor& context) const override;

  std::string arch() const override { return "vit"; }
  nlohmann::json config_json() const override { return cfg_.to_json(); }
  std::unique_ptr<Model> clone() const override;
  std::size_t context_length() const override { return cfg_.context; }
  std::size_t in_channels() const override { return cfg_.in_channels; }
  std::size_t out_channels() const override { return cfg_.out_channels; }
  std::vector<std::size_t> spatial() const override { return cfg_.spatial; }

  EncoderWeights layer(std::size_t i) const;

  ad::Tensor& embed_w() { return weights_[0].tensor; }
  ad::Tensor& embed_b() { return weights_[1].tensor; }
  ad::Tensor& pos() { return weights_[2].tensor; }
  ad::Tensor& readout_w() { return tail(0); }
  ad::Tensor& readout_b() { return tail(1); }
  ad::Tensor& deconv_w() { return tail(2); }
  ad::Tensor& deconv_b() { return tail(3); }
  ad::Tensor& head_w() { return tail(4); }
  ad::Tensor& head_b() { return tail(5); }

 private:
  ad::Tensor& tail(std::size_t i) { return weights_[3 + 12 * cfg_.layers + i].tensor; }
  const ad::Tensor& ctail(std::size_t i) const {
    return weights_[3 + 12 * cfg_.layers + i].tensor;
  }

  ViTConfig cfg_;
};

}  // namespace pdet
