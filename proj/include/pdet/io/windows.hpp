#pragma once

#include <span>
#include <vector>

#include "pdet/io/norm.hpp"
#include "pdet/io/types.hpp"

namespace pdet {

// context is [k][C + P + 1][cells]: standardized physical channels, then the
// normalized parameters broadcast over space, then t / t_final.
struct WindowSample {
  std::vector<double> context;
  std::vector<double> target;  // [C][cells], standardized
  std::size_t trajectory = 0;
  std::size_t t = 0;           // index of the target frame
};

inline std::size_t context_channels(std::size_t n_physical, std::size_t n_params) {
  return n_physical + n_params + 1;
}

// Writes one context window. `frames` holds k consecutive physical frames
// ([k][C][cells], raw units) starting at frame index `first`; `dt_over_tf` is
// dt / t_final so that the time channel of frame i is i * dt_over_tf.
void fill_context(std::span<const double> frames, std::size_t k, std::size_t n_channels,
                  std::size_t cells, std::span<const double> norm_params, std::size_t first,
                  double dt_over_tf, const NormStats& stats, std::span<double> out);

// All T - k windows of a trajectory in time order.
std::vector<WindowSample> windows(const Trajectory& traj, std::size_t k, const NormStats& stats,
                                  std::size_t trajectory_id = 0);

}  // namespace pdet
