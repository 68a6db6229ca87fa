#include "pdet/model/model.hpp"

#include <algorithm>

#include "pdet/core/error.hpp"
#include "pdet/model/fno.hpp"
#include "pdet/model/vit.hpp"

namespace pdet {

std::size_t Model::param_count() const {
  std::size_t n = 0;
  for (const auto& w : weights_) n += w.tensor.numel();
  return n;
}

void Model::zero_grad() {
  for (auto& w : weights_) w.tensor.zero_grad();
}

void Model::copy_weights_from(const Model& other) {
  if (other.weights_.size() != weights_.size()) {
    throw ShapeError("cannot copy weights between models of different layout");
  }
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    const auto& src = other.weights_[i].tensor;
    auto& dst = weights_[i].tensor;
    if (src.shape() != dst.shape()) {
      throw ShapeError("weight " + weights_[i].name + " shape mismatch: " +
                       ad::to_string(src.shape()) + " vs " + ad::to_string(dst.shape()));
    }
    std::copy(src.data().begin(), src.data().end(), dst.mutable_data().begin());
  }
}

ad::Tensor& Model::add_weight(std::string name, ad::Shape shape) {
  weights_.push_back({std::move(name), ad::Tensor::zeros(std::move(shape), true)});
  return weights_.back().tensor;
}

void Model::clone_weights_into(Model& dst) const { dst.copy_weights_from(*this); }

std::unique_ptr<Model> make_model(const std::string& arch, const nlohmann::json& config,
                                  std::uint64_t seed) {
  if (arch == "vit") {
    auto m = std::make_unique<ViT>(ViTConfig::from_json(config));
    m->init(seed);
    return m;
  }
  if (arch == "fno") {
    auto m = std::make_unique<FNO>(FNOConfig::from_json(config));
    m->init(seed);
    return m;
  }
  throw ConfigError("unknown model architecture '" + arch + "' (expected vit or fno)");
}

}  // namespace pdet
