#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "pdet/io/dataset.hpp"
#include "pdet/io/types.hpp"

namespace pdet {

// Sum of n_modes sinusoids A sin(2 pi k.x + phi) with integer wavenumbers
// drawn from [wavenumber_min, wavenumber_max] (in 2D the second component
// ranges over [-wavenumber_max, wavenumber_max]).
struct InitialConditionSpec {
  std::uint64_t seed = 0;
  std::size_t n_modes = 4;
  double amplitude_lo = 0.1;
  double amplitude_hi = 1.0;
  int wavenumber_min = 0;
  int wavenumber_max = 4;
  // Force every mode's wavenumber / phase (degenerate test fields).
  std::optional<int> wavenumber;
  std::optional<double> phase;

  void validate() const;
};

// One channel on the grid, row-major. `channel` selects an independent
// sub-stream of the spec seed for multi-channel fields.
std::vector<double> sample_initial_condition(const InitialConditionSpec& spec,
                                             const GridSpec& grid, std::size_t channel = 0);

// u(x, t) = u0(x - a t) via Fourier phase shift on the unit interval.
Trajectory solve_advection(std::span<const double> u0, double a, const GridSpec& grid);

// Internal steps per output frame from dt <= 0.4 dx / max|u0|.
std::size_t burgers_auto_substeps(std::span<const double> u0, const GridSpec& grid);

// Integrating-factor RK4 pseudo-spectral solver, 2/3-rule dealiasing.
// substeps == 0 picks burgers_auto_substeps. Throws DivergenceError naming
// the first frame with a non-finite value.
Trajectory solve_burgers(std::span<const double> u0, double nu, const GridSpec& grid,
                         std::size_t substeps = 0);

// u0 is [C][nx][ny]; channel c moves with velocity (ax, ay) * (1 + spread c).
Trajectory solve_ns2d_synthetic(std::span<const double> u0, std::size_t n_channels,
                                const SystemParams& params, const GridSpec& grid);

struct GenerateOptions {
  InitialConditionSpec ic;       // seed is overwritten per trajectory
  std::size_t substeps = 0;      // Burgers only
  std::size_t threads = 1;
};

// Trajectory j of every parameter value uses IC seed derive_seed(seed, "ic", j),
// so frame 0 is shared across parameters. Output is parameter-major.
Dataset generate_dataset(System system, const std::vector<std::vector<double>>& params,
                         std::size_t n_traj, const GridSpec& grid, std::uint64_t seed,
                         const GenerateOptions& options = {});

Trajectory generate_trajectory(const SystemParams& params, const GridSpec& grid,
                               const InitialConditionSpec& ic, std::size_t substeps = 0);

}  // namespace pdet
