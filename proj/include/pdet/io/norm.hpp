#pragma once

#include <span>
#include <vector>

#include "json.hpp"
#include "pdet/io/types.hpp"

namespace pdet {

// Physical channels are standardized; parameters go through an affine map
// taking [min, max] of the fitted set onto [-1, 1]. A degenerate range maps
// every value to 0.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;
  std::vector<double> param_min;
  std::vector<double> param_max;

  double normalize_param(std::size_t i, double v) const;
  std::vector<double> normalize_params(std::span<const double> p) const;

  // In place over one frame laid out [C][cells].
  void normalize_frame(std::span<double> frame, std::size_t cells) const;
  void denormalize_frame(std::span<double> frame, std::size_t cells) const;

  nlohmann::json to_json() const;
  static NormStats from_json(const nlohmann::json& j);
};

// Population mean/std per channel over every value of every frame.
NormStats compute_norm_stats(std::span<const Trajectory* const> train);

// Widens the parameter map to also cover `extra`; channel stats untouched.
NormStats refit_param_map(const NormStats& base,
                          std::span<const std::vector<double>> extra);

}  // namespace pdet
