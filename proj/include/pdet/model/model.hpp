#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "pdet/ad/tensor.hpp"

namespace pdet {

struct NamedTensor {
  std::string name;
  ad::Tensor tensor;
};

// Next-frame predictor on normalized data. Input context is
// [k, C + P + 1, S...]; output is [C, S...].
class Model {
 public:
  virtual ~Model() = default;

  virtual std::string arch() const = 0;
  virtual nlohmann::json config_json() const = 0;
  virtual ad::Tensor forward(const ad::Tensor& context) const = 0;
  virtual std::unique_ptr<Model> clone() const = 0;

  virtual std::size_t context_length() const = 0;
  virtual std::size_t in_channels() const = 0;   // C + P + 1
  virtual std::size_t out_channels() const = 0;  // C
  virtual std::vector<std::size_t> spatial() const = 0;

  // Weight buffers in their declared (serialization) order.
  std::vector<NamedTensor>& weights() { return weights_; }
  const std::vector<NamedTensor>& weights() const { return weights_; }
  std::size_t param_count() const;
  void zero_grad();
  // Copies values from a model with identical buffer layout.
  void copy_weights_from(const Model& other);

 protected:
  ad::Tensor& add_weight(std::string name, ad::Shape shape);
  // Deep-copies buffers (values only, fresh grads) into `dst`.
  void clone_weights_into(Model& dst) const;

  std::vector<NamedTensor> weights_;
};

// Builds a model of the given arch from its config; weights initialized from
// `seed` ("init" sub-stream of the run seed is the caller's business).
std::unique_ptr<Model> make_model(const std::string& arch, const nlohmann::json& config,
                                  std::uint64_t seed);

}  // namespace pdet
