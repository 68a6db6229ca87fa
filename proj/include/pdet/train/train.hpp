#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pdet/ad/tensor.hpp"
#include "pdet/io/norm.hpp"
#include "pdet/io/types.hpp"
#include "pdet/model/model.hpp"

namespace pdet {

// Every (trajectory, target index) pair of a set of trajectories; contexts
// and targets are assembled on demand in normalized units.
class WindowSet {
 public:
  WindowSet(std::vector<const Trajectory*> trajectories, std::size_t k, const NormStats& stats);

  std::size_t size() const { return refs_.size(); }
  std::size_t k() const { return k_; }
  const ad::Shape& context_shape() const { return context_shape_; }
  const ad::Shape& target_shape() const { return target_shape_; }

  void context(std::size_t i, std::span<double> out) const;
  void target(std::size_t i, std::span<double> out) const;
  ad::Tensor context_tensor(std::size_t i) const;
  ad::Tensor target_tensor(std::size_t i) const;

 private:
  struct Ref {
    std::uint32_t traj;
    std::uint32_t t;
  };
  std::vector<const Trajectory*> trajs_;
  std::vector<std::vector<double>> norm_params_;
  std::vector<Ref> refs_;
  std::size_t k_;
  NormStats stats_;
  ad::Shape context_shape_, target_shape_;
};

// Mean of squared differences over all elements.
ad::Tensor mse_loss(const ad::Tensor& pred, const ad::Tensor& target);

struct OptimState {
  std::vector<std::vector<double>> m, v;
  std::size_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled

  void reset(const std::vector<NamedTensor>& weights);
};

// Bias-corrected Adam. Throws DivergenceError naming the first buffer whose
// gradient is not finite; nothing is updated in that case.
void adam_step(std::vector<NamedTensor>& weights, const std::vector<std::vector<double>>& grads,
               OptimState& opt);

// Scales grads in place so their global L2 norm is at most max_norm; returns
// the norm before clipping.
double clip_global_norm(std::vector<std::vector<double>>& grads, double max_norm);

// Halves (by `factor`) the rate after `patience` epochs without a strict
// improvement of the monitored value.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, double factor, std::size_t patience);
  // Returns true when `value` is a new best.
  bool observe(double value);
  double lr() const { return lr_; }
  double best() const { return best_; }
  std::size_t reductions() const { return reductions_; }

 private:
  double lr_, factor_;
  std::size_t patience_;
  double best_;
  std::size_t bad_ = 0;
  std::size_t reductions_ = 0;
};

struct TrainPlan {
  std::size_t max_epochs = 100;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  double plateau_factor = 0.5;
  std::size_t plateau_patience = 5;
  std::size_t early_stop_patience = 15;  // 0 disables early stopping
  std::size_t max_steps = 0;             // 0 = no step cap
  double clip_norm = 1.0;                // <= 0 disables clipping
  double weight_decay = 0.0;
  double input_noise = 0.0;              // std of Gaussian noise on context state channels
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  bool restore_best = true;              // end with the best-validation weights

  void validate() const;
  nlohmann::json to_json() const;
  static TrainPlan from_json(const nlohmann::json& j);
};

struct EpochRecord {
  std::size_t epoch;
  double train_mse;
  double val_mse;
  double lr;
};

struct TrainResult {
  std::vector<EpochRecord> log;
  std::size_t steps = 0;
  std::size_t best_epoch = 0;
  double best_val = 0.0;
};

void write_train_log(const std::filesystem::path& path, const std::vector<EpochRecord>& log);
std::string format_train_log(const std::vector<EpochRecord>& log);

// One-step MSE (normalized) of the model over every window of the set.
double evaluate_windows(const Model& model, const WindowSet& windows, std::size_t threads = 1);

// Epoch loop over seeded shuffles of the training windows. When `val` is
// empty the training MSE drives scheduling. Throws DivergenceError on a
// non-finite loss or gradient.
TrainResult train(Model& model, const WindowSet& train_set, const WindowSet& val_set,
                  const TrainPlan& plan);

// Runs exactly plan.max_epochs epochs with no early stop and keeps the final
// weights (zero epochs leaves the model untouched).
TrainResult finetune(Model& model, const WindowSet& train_set, const WindowSet& val_set,
                     TrainPlan plan);

// Checks that a dataset's layout fits the model.
void check_compatible(const Model& model, const NormStats& stats, std::size_t n_channels,
                      std::size_t n_params, const std::vector<std::size_t>& spatial);

}  // namespace pdet
