#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pdet/eval/study.hpp"

namespace pdet::cli {

struct Globals {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::string runs_dir = "runs";
  std::string run_dir;  // explicit run directory; overrides runs_dir naming
  bool quiet = false;
};

struct GenerateArgs {
  std::string system = "advection";
  std::vector<std::string> params;
  std::size_t n_traj = 10;
  std::vector<std::size_t> nx;  // empty: 256 in 1D, 64x64 in 2D
  std::size_t timesteps = 41;
  double t_final = 2.0;
  std::size_t n_modes = 4;
  double amp_lo = 0.1;
  double amp_hi = 1.0;
  std::size_t k_min = 0;
  std::size_t k_max = 4;
  std::size_t substeps = 0;
  std::string out;
};

struct SplitArgs {
  std::vector<std::string> id;
  std::vector<std::string> ood;
  double train_fraction = 0.8;
  std::size_t test_per_param = 2;
  std::size_t max_per_param = 0;
};

struct ModelArgs {
  std::size_t context = 8;
  std::vector<std::size_t> patch;  // empty: 32 per space axis (16 in 2D), 1 in time
  std::size_t hidden = 256;
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  std::size_t modes = 12;
  std::size_t width = 20;
  std::size_t fno_layers = 4;
  std::size_t projection = 128;
};

struct TrainArgs {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  double plateau_factor = 0.5;
  std::size_t plateau_patience = 5;
  std::size_t early_stop = 15;
  std::size_t max_steps = 0;
  double clip = 1.0;
  double weight_decay = 0.0;
  double input_noise = 0.0;
};

std::vector<std::vector<double>> parse_param_list(const std::vector<std::string>& items);

SplitPlan make_split_plan(const SplitArgs& a, const DatasetManifest& manifest);
ModelSpec make_spec(const std::string& arch, const ModelArgs& m);
TrainPlan make_plan(const TrainArgs& t, const Globals& g);

// Creates <runs>/<UTC timestamp>-seed<seed>-<command> (or the explicit dir)
// and writes config.toml plus run.json into it.
std::filesystem::path open_run_dir(const Globals& g, const std::string& command,
                                   const std::string& resolved_config);

}  // namespace pdet::cli
