#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pdet/eval/rollout.hpp"
#include "pdet/io/dataset.hpp"
#include "pdet/io/splits.hpp"
#include "pdet/model/checkpoint.hpp"
#include "pdet/train/train.hpp"

namespace pdet {

struct ModelSpec {
  std::string arch = "vit";
  nlohmann::json config = nlohmann::json::object();  // partial; layout keys are filled in
};

// Fills spatial extents and channel counts from the dataset; everything else
// (context length, widths, patch) comes from the spec or the arch defaults.
nlohmann::json resolve_model_config(const ModelSpec& spec, const DatasetManifest& manifest);

struct FitOutcome {
  std::unique_ptr<Model> model;
  NormStats stats;
  TrainResult result;
};

// Fresh model, init stream derive_seed(plan.seed, "init", 0), stats from train.
FitOutcome fit_model(const ModelSpec& spec, const DatasetManifest& manifest,
                     const std::vector<const Trajectory*>& train_set,
                     const std::vector<const Trajectory*>& val_set, const TrainPlan& plan);

// Continues `base` for plan.max_epochs epochs with the channel stats kept and
// the parameter map widened to the new trajectories.
FitOutcome finetune_model(const Model& base, const NormStats& base_stats,
                          const std::vector<const Trajectory*>& train_set,
                          const std::vector<const Trajectory*>& val_set, const TrainPlan& plan);

// Test-split items, optionally restricted to one parameter vector.
std::vector<EvalItem> test_items(const Dataset& data, const SplitAssignment& split,
                                 const SplitPlan& plan,
                                 const std::vector<double>* only = nullptr);

std::vector<const Trajectory*> pick(const Dataset& data, const SplitAssignment& split, Split which,
                                    const std::vector<double>* only = nullptr);

struct CompareOptions {
  ModelSpec vit{"vit", nlohmann::json::object()};
  ModelSpec fno{"fno", nlohmann::json::object()};
  TrainPlan vit_plan;
  TrainPlan fno_plan;
  SplitPlan split;
  std::size_t designated = 0;  // index into split.id_params for FNO[II]
  std::uint64_t seed = 0;      // split seed
  std::size_t threads = 1;
};

struct CompareRow {
  std::string model;
  std::optional<double> id_mean, ood_mean;
  std::optional<double> persistence_id_mean;
  std::size_t train_trajectories = 0;
  std::size_t param_count = 0;
};

struct Comparison {
  std::vector<CompareRow> rows;  // vit, fno-i, fno-ii, then fno-i per parameter
  std::string csv() const;       // model,id_mean,ood_mean ("-" when absent)
  nlohmann::json to_json() const;
};

Comparison compare_fno(const Dataset& data, const CompareOptions& opts);

enum class StudyAxis { kDataSize, kModelSize };

struct StudyPoint {
  std::string label;
  std::size_t trajectories = 0;  // data-size: training trajectories per parameter
  std::size_t layers = 0;        // model-size
  std::size_t hidden = 0;
};

struct StudyGrid {
  StudyAxis axis = StudyAxis::kDataSize;
  std::vector<StudyPoint> points;

  static StudyGrid data_size(const std::vector<std::size_t>& per_param);
  // small, base, large or explicit "L<layers>H<hidden>".
  static StudyGrid model_size(const std::vector<std::string>& names);
  void validate() const;
};

struct StudyOptions {
  ModelSpec model;
  TrainPlan plan;
  SplitPlan split;
  bool per_parameter = false;   // one model per id parameter (FNO[I] style)
  bool parallel_points = false;
  std::uint64_t seed = 0;       // split seed
  std::size_t threads = 1;      // evaluation threads
  std::filesystem::path csv_path;  // rows appended as points finish when set
};

struct StudyRow {
  std::string point;
  double x = 0.0;  // trajectories per parameter or parameter count
  std::optional<double> id_mean, ood_mean, persistence_id_mean;
  std::size_t param_count = 0;
  std::size_t train_trajectories = 0;
  std::size_t n_diverged = 0;
};

struct StudyResult {
  StudyAxis axis = StudyAxis::kDataSize;
  std::vector<StudyRow> rows;

  static std::string csv_header();
  static std::string csv_row(const StudyRow& r);
  std::string csv() const;
  nlohmann::json plot_json() const;
};

// One train + evaluate per point. A failing point rethrows after the rows
// finished so far are on disk.
StudyResult scaling_study(const Dataset& data, const StudyGrid& grid, const StudyOptions& opts);

std::string axis_name(StudyAxis a);
StudyAxis parse_axis(const std::string& s);

}  // namespace pdet
