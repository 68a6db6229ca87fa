#include "pdet/io/windows.hpp"

#include <algorithm>

#include "pdet/core/error.hpp"

namespace pdet {

void fill_context(std::span<const double> frames, std::size_t k, std::size_t n_channels,
                  std::size_t cells, std::span<const double> norm_params, std::size_t first,
                  double dt_over_tf, const NormStats& stats, std::span<double> out) {
  const std::size_t cin = context_channels(n_channels, norm_params.size());
  if (out.size() != k * cin * cells || frames.size() != k * n_channels * cells) {
    throw ShapeError("context buffer size mismatch");
  }
  for (std::size_t f = 0; f < k; ++f) {
    double* dst = out.data() + f * cin * cells;
    const double* src = frames.data() + f * n_channels * cells;
    for (std::size_t c = 0; c < n_channels; ++c) {
      const double m = stats.mean[c], inv = 1.0 / stats.std[c];
      for (std::size_t s = 0; s < cells; ++s) {
        dst[c * cells + s] = (src[c * cells + s] - m) * inv;
      }
    }
    for (std::size_t p = 0; p < norm_params.size(); ++p) {
      std::fill_n(dst + (n_channels + p) * cells, cells, norm_params[p]);
    }
    std::fill_n(dst + (cin - 1) * cells, cells, static_cast<double>(first + f) * dt_over_tf);
  }
}

std::vector<WindowSample> windows(const Trajectory& traj, std::size_t k, const NormStats& stats,
                                  std::size_t trajectory_id) {
  if (k == 0 || traj.n_frames <= k) {
    throw DataError("trajectory has " + std::to_string(traj.n_frames) +
                    " frames, context length " + std::to_string(k) + " needs at least " +
                    std::to_string(k + 1));
  }
  const std::size_t cells = traj.cells();
  const std::size_t nc = traj.n_channels;
  const auto np = stats.normalize_params(traj.params.values);
  const std::size_t cin = context_channels(nc, np.size());
  const double dt_over_tf = 1.0 / static_cast<double>(traj.n_frames - 1);
  std::vector<WindowSample> out;
  out.reserve(traj.n_frames - k);
  for (std::size_t t = k; t < traj.n_frames; ++t) {
    WindowSample w;
    w.trajectory = trajectory_id;
    w.t = t;
    w.context.resize(k * cin * cells);
    fill_context({traj.frames.data() + (t - k) * nc * cells, k * nc * cells}, k, nc, cells, np,
                 t - k, dt_over_tf, stats, w.context);
    const auto frame = traj.frame(t);
    w.target.assign(frame.begin(), frame.end());
    stats.normalize_frame(w.target, cells);
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace pdet
