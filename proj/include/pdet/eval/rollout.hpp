#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pdet/io/norm.hpp"
#include "pdet/io/types.hpp"
#include "pdet/model/model.hpp"

namespace pdet {

struct StepInput {
  std::span<const double> frames;  // k consecutive frames [k][C][cells], physical units
  std::size_t first = 0;           // frame index of frames[0]
  std::size_t target = 0;          // index of the frame being predicted
  const Trajectory* trajectory = nullptr;
  double dt = 0.0;
};

// Anything that maps k physical frames to the next one.
class Stepper {
 public:
  virtual ~Stepper() = default;
  virtual std::string id() const = 0;
  virtual std::size_t context_length() const = 0;
  virtual void step(const StepInput& in, std::span<double> out) const = 0;
};

// Trained network; normalizes the context, denormalizes the prediction.
class ModelStepper final : public Stepper {
 public:
  ModelStepper(const Model& model, NormStats stats, std::string id = "");
  std::string id() const override { return id_; }
  std::size_t context_length() const override { return model_.context_length(); }
  void step(const StepInput& in, std::span<double> out) const override;

 private:
  const Model& model_;
  NormStats stats_;
  std::string id_;
};

// Repeats the last context frame.
class PersistenceStepper final : public Stepper {
 public:
  explicit PersistenceStepper(std::size_t k) : k_(k) {}
  std::string id() const override { return "persistence"; }
  std::size_t context_length() const override { return k_; }
  void step(const StepInput& in, std::span<double> out) const override;

 private:
  std::size_t k_;
};

// Exact one-step Fourier shift of the last frame by a * dt (1D advection).
class AdvectionOracleStepper final : public Stepper {
 public:
  explicit AdvectionOracleStepper(std::size_t k) : k_(k) {}
  std::string id() const override { return "advection-oracle"; }
  std::size_t context_length() const override { return k_; }
  void step(const StepInput& in, std::span<double> out) const override;

 private:
  std::size_t k_;
};

// Copies the true next frame; a harness self-check.
class PassthroughStepper final : public Stepper {
 public:
  explicit PassthroughStepper(std::size_t k) : k_(k) {}
  std::string id() const override { return "ground-truth"; }
  std::size_t context_length() const override { return k_; }
  void step(const StepInput& in, std::span<double> out) const override;

 private:
  std::size_t k_;
};

struct RolloutResult {
  std::vector<double> frames;     // [T][C][cells]; first k are the true seed
  std::vector<double> frame_mse;  // per predicted frame k..T-1
  double mse = 0.0;               // over frames k..T-1; +inf when diverged
  bool diverged = false;
};

// Seeds with the first k true frames, then feeds predictions back.
RolloutResult rollout(const Stepper& stepper, const Trajectory& traj, double dt);

struct TrajectoryScore {
  std::size_t trajectory_id = 0;
  std::vector<double> params;
  bool ood = false;
  double mse = 0.0;
  bool diverged = false;
  double persistence_mse = 0.0;
  std::vector<double> frame_mse;
};

struct ParamSummary {
  std::vector<double> params;
  bool ood = false;
  std::size_t n = 0;
  std::size_t n_diverged = 0;
  double mean = 0.0;  // over non-diverged trajectories
  double persistence_mean = 0.0;
  std::vector<double> frame_mse;  // mean error per predicted frame
};

struct RolloutReport {
  std::string model_id;
  std::size_t k = 0;
  std::size_t horizon = 0;  // predicted frames per trajectory
  std::vector<TrajectoryScore> rows;
  std::vector<ParamSummary> per_param;
  std::optional<double> id_mean, ood_mean;
  std::optional<double> persistence_id_mean, persistence_ood_mean;
  std::size_t n_diverged = 0;

  nlohmann::json aggregate_json() const;
  nlohmann::json plot_json() const;
  std::string rows_csv() const;
  void write(const std::filesystem::path& dir, const std::string& stem = "report") const;
};

struct EvalItem {
  const Trajectory* trajectory;
  std::size_t id;  // manifest index
  bool ood;
};

// Rolls out every item (parallel over trajectories) and aggregates.
RolloutReport evaluate(const Stepper& stepper, const std::vector<EvalItem>& items, double dt,
                       std::size_t threads = 1);

}  // namespace pdet
