#pragma once

#include <cstdint>
#include <vector>

#include "json.hpp"
#include "pdet/ad/tensor.hpp"
#include "pdet/model/model.hpp"

namespace pdet {

struct FNOConfig {
  std::vector<std::size_t> spatial{256};
  std::size_t context = 8;         // k
  std::size_t in_channels = 3;     // C + P + 1 of the shared context layout
  std::size_t out_channels = 1;    // C; only these context channels are consumed
  std::size_t modes = 12;
  std::size_t width = 20;
  std::size_t layers = 4;
  std::size_t lifting = 0;         // 0 = lift straight to width
  std::size_t projection = 128;
  bool coords = true;              // append normalized grid coordinates

  std::size_t lift_in() const;     // k * C (+ rank when coords)
  void validate() const;
  nlohmann::json to_json() const;
  static FNOConfig from_json(const nlohmann::json& j);
};

// x[width_in, S...] -> [width_out, S...]: rfft, per-mode complex mixing of the
// kept low modes, zero elsewhere, irfft. weights[w_in, w_out, (2m,) m, 2].
ad::Tensor spectral_conv(const ad::Tensor& x, const ad::Tensor& weights, std::size_t modes);

class FNO final : public Model {
 public:
  explicit FNO(const FNOConfig& cfg);

  // Linear maps uniform in +-1/sqrt(fan_in); spectral weights uniform in
  // [0, 1/(w_in w_out)) for both real and imaginary parts.
  void init(std::uint64_t seed);

  const FNOConfig& config() const { return cfg_; }

  ad::Tensor forward(const ad::Tensor& context) const override;
  // Same network on an explicit [k, C, S...] state history.
  ad::Tensor forward_state(const ad::Tensor& history) const;

  std::string arch() const override { return "fno"; }
  nlohmann::json config_json() const override { return cfg_.to_json(); }
  std::unique_ptr<Model> clone() const override;
  std::size_t context_length() const override { return cfg_.context; }
  std::size_t in_channels() const override { return cfg_.in_channels; }
  std::size_t out_channels() const override { return cfg_.out_channels; }
  std::vector<std::size_t> spatial() const override { return cfg_.spatial; }

  const ad::Tensor& spectral_weight(std::size_t layer) const;

 private:
  FNOConfig cfg_;
  ad::Tensor coords_;  // [rank, S...], constant
};

}  // namespace pdet
