#pragma once

// Analytic form of the sinusoidal initial conditions, recovered by replaying
// the generator's draw order: kx, ky (2D only), amplitude, phase per mode.

#include <cmath>
#include <numbers>
#include <vector>

#include "pdet/core/rng.hpp"
#include "pdet/datagen/datagen.hpp"

namespace pdet::testing {

struct Mode {
  double kx, ky, amp, phi;
};

inline std::vector<Mode> replay_modes(const InitialConditionSpec& spec, std::size_t channel,
                                      bool two_d) {
  Rng rng(derive_seed(spec.seed, "ic-channel", channel));
  std::vector<Mode> modes;
  for (std::size_t m = 0; m < spec.n_modes; ++m) {
    Mode md;
    md.kx = double(rng.uniform_int(spec.wavenumber_min, spec.wavenumber_max));
    md.ky = two_d ? double(rng.uniform_int(-spec.wavenumber_max, spec.wavenumber_max)) : 0.0;
    md.amp = rng.uniform(spec.amplitude_lo, spec.amplitude_hi);
    md.phi = rng.uniform(0.0, 2 * std::numbers::pi);
    modes.push_back(md);
  }
  return modes;
}

inline double eval_modes(const std::vector<Mode>& modes, double x, double y) {
  double v = 0.0;
  for (const auto& md : modes) {
    v += md.amp * std::sin(2 * std::numbers::pi * (md.kx * x + md.ky * y) + md.phi);
  }
  return v;
}

}  // namespace pdet::testing
