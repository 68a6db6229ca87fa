#include "pdet/datagen/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pdet/core/error.hpp"
#include "pdet/core/fft.hpp"
#include "pdet/core/parallel.hpp"
#include "pdet/core/rng.hpp"

namespace pdet {
namespace {

using fft::cplx;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Signed wavenumber of FFT bin i on an n-point axis.
double signed_k(std::size_t i, std::size_t n) {
  return i <= n / 2 ? static_cast<double>(i) : static_cast<double>(i) - static_cast<double>(n);
}

void check_finite(std::span<const double> v, std::size_t frame, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw DivergenceError(std::string(what) + " produced a non-finite value at frame " +
                            std::to_string(frame));
    }
  }
}

Trajectory empty_trajectory(const SystemParams& params, const GridSpec& grid,
                            std::size_t channels) {
  Trajectory t;
  t.params = params;
  t.n_frames = grid.n_timesteps;
  t.n_channels = channels;
  t.spatial = grid.spatial_extents;
  t.frames.assign(t.n_frames * channels * grid.cells(), 0.0);
  return t;
}

// 2D complex transform of a [nx][ny] row-major block.
void transform2(std::vector<cplx>& data, std::size_t nx, std::size_t ny, bool inverse) {
  for (std::size_t i = 0; i < nx; ++i) fft::transform({data.data() + i * ny, ny}, inverse);
  std::vector<cplx> col(nx);
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nx; ++i) col[i] = data[i * ny + j];
    fft::transform(col, inverse);
    for (std::size_t i = 0; i < nx; ++i) data[i * ny + j] = col[i];
  }
}

// Shifts a periodic [nx][ny] field (ny = 1 for 1D) by (sx, sy) domain
// lengths: out(x) = in(x - s).
void fourier_shift(std::span<const cplx> spec, std::size_t nx, std::size_t ny, double sx,
                   double sy, std::vector<cplx>& work, std::span<double> out) {
  work.assign(spec.begin(), spec.end());
  for (std::size_t i = 0; i < nx; ++i) {
    const double px = signed_k(i, nx) * sx;
    for (std::size_t j = 0; j < ny; ++j) {
      const double phase = -kTwoPi * (px + (ny > 1 ? signed_k(j, ny) * sy : 0.0));
      work[i * ny + j] *= cplx(std::cos(phase), std::sin(phase));
    }
  }
  if (ny > 1) {
    transform2(work, nx, ny, true);
  } else {
    fft::transform(work, true);
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = work[i].real();
}

std::vector<cplx> forward_spectrum(std::span<const double> u, std::size_t nx, std::size_t ny) {
  std::vector<cplx> spec(u.begin(), u.end());
  if (ny > 1) {
    transform2(spec, nx, ny, false);
  } else {
    fft::transform(spec, false);
  }
  return spec;
}

}  // namespace

void InitialConditionSpec::validate() const {
  if (n_modes < 1) throw ConfigError("initial condition needs n_modes >= 1");
  if (!(amplitude_lo <= amplitude_hi)) throw ConfigError("amplitude range must have lo <= hi");
  if (wavenumber_max < 1 || wavenumber_min < 0 || wavenumber_min > wavenumber_max) {
    throw ConfigError("wavenumber range must satisfy 0 <= min <= max, max >= 1");
  }
}

std::vector<double> sample_initial_condition(const InitialConditionSpec& spec,
                                             const GridSpec& grid, std::size_t channel) {
  spec.validate();
  grid.validate();
  const std::size_t nx = grid.spatial_extents[0];
  const std::size_t ny = grid.spatial_extents.size() > 1 ? grid.spatial_extents[1] : 1;
  const bool two_d = grid.spatial_extents.size() > 1;
  Rng rng(derive_seed(spec.seed, "ic-channel", channel));
  std::vector<double> u(nx * ny, 0.0);
  for (std::size_t m = 0; m < spec.n_modes; ++m) {
    double kx = static_cast<double>(rng.uniform_int(spec.wavenumber_min, spec.wavenumber_max));
    double ky = two_d ? static_cast<double>(rng.uniform_int(-spec.wavenumber_max,
                                                            spec.wavenumber_max))
                      : 0.0;
    const double amp = rng.uniform(spec.amplitude_lo, spec.amplitude_hi);
    double phi = rng.uniform(0.0, kTwoPi);
    if (spec.wavenumber) kx = *spec.wavenumber;
    if (spec.phase) phi = *spec.phase;
    for (std::size_t i = 0; i < nx; ++i) {
      const double x = static_cast<double>(i) / static_cast<double>(nx);
      for (std::size_t j = 0; j < ny; ++j) {
        const double y = static_cast<double>(j) / static_cast<double>(ny);
        u[i * ny + j] += amp * std::sin(kTwoPi * (kx * x + ky * y) + phi);
      }
    }
  }
  return u;
}

Trajectory solve_advection(std::span<const double> u0, double a, const GridSpec& grid) {
  grid.validate();
  if (grid.spatial_extents.size() != 1 || u0.size() != grid.cells()) {
    throw ShapeError("advection expects a 1D field matching the grid");
  }
  const std::size_t n = grid.cells();
  Trajectory traj = empty_trajectory({System::kAdvection, {a}}, grid, 1);
  const auto spec = forward_spectrum(u0, n, 1);
  std::vector<cplx> work;
  std::copy(u0.begin(), u0.end(), traj.frames.begin());
  for (std::size_t f = 1; f < grid.n_timesteps; ++f) {
    const double shift = a * static_cast<double>(f) * grid.dt();
    fourier_shift(spec, n, 1, shift, 0.0, work, traj.frame(f));
    check_finite(traj.frame(f), f, "advection solver");
  }
  return traj;
}

std::size_t burgers_auto_substeps(std::span<const double> u0, const GridSpec& grid) {
  double umax = 0.0;
  for (double v : u0) umax = std::max(umax, std::abs(v));
  if (umax == 0.0) return 1;
  const double dx = 1.0 / static_cast<double>(grid.spatial_extents[0]);
  const double h = 0.4 * dx / umax;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(grid.dt() / h)));
}

Trajectory solve_burgers(std::span<const double> u0, double nu, const GridSpec& grid,
                         std::size_t substeps) {
  grid.validate();
  if (!(nu > 0.0)) throw ConfigError("Burgers viscosity nu must be > 0");
  if (grid.spatial_extents.size() != 1 || u0.size() != grid.cells()) {
    throw ShapeError("Burgers expects a 1D field matching the grid");
  }
  const std::size_t n = grid.cells();
  const std::size_t nb = n / 2 + 1;
  if (substeps == 0) substeps = burgers_auto_substeps(u0, grid);
  Trajectory traj = empty_trajectory({System::kBurgers, {nu}}, grid, 1);
  std::copy(u0.begin(), u0.end(), traj.frames.begin());

  const double h = grid.dt() / static_cast<double>(substeps);
  std::vector<double> kappa(nb), e_full(nb), e_half(nb);
  std::vector<bool> keep(nb);
  for (std::size_t k = 0; k < nb; ++k) {
    kappa[k] = kTwoPi * static_cast<double>(k);
    keep[k] = 3 * k < n;
    const double lin = -nu * kappa[k] * kappa[k];
    e_full[k] = std::exp(lin * h);
    e_half[k] = std::exp(lin * h * 0.5);
  }

  auto uhat = fft::rfft(u0);
  for (std::size_t k = 0; k < nb; ++k) {
    if (!keep[k]) uhat[k] = 0.0;
  }
  // N(v) = -d/dx (u^2 / 2), dealiased.
  std::vector<double> phys(n);
  auto nonlinear = [&](const std::vector<cplx>& v, std::vector<cplx>& out) {
    phys = fft::irfft(v, n);
    for (auto& x : phys) x = 0.5 * x * x;
    out = fft::rfft(phys);
    for (std::size_t k = 0; k < nb; ++k) {
      out[k] = keep[k] ? cplx(kappa[k] * out[k].imag(), -kappa[k] * out[k].real()) : cplx(0.0);
    }
  };
  std::vector<cplx> a(nb), b(nb), c(nb), d(nb), tmp(nb);
  for (std::size_t f = 1; f < grid.n_timesteps; ++f) {
    for (std::size_t s = 0; s < substeps; ++s) {
      nonlinear(uhat, a);
      for (std::size_t k = 0; k < nb; ++k) tmp[k] = e_half[k] * (uhat[k] + 0.5 * h * a[k]);
      nonlinear(tmp, b);
      for (std::size_t k = 0; k < nb; ++k) tmp[k] = e_half[k] * uhat[k] + 0.5 * h * b[k];
      nonlinear(tmp, c);
      for (std::size_t k = 0; k < nb; ++k) tmp[k] = e_full[k] * uhat[k] + e_half[k] * h * c[k];
      nonlinear(tmp, d);
      for (std::size_t k = 0; k < nb; ++k) {
        uhat[k] = e_full[k] * uhat[k] +
                  h / 6.0 * (e_full[k] * a[k] + 2.0 * e_half[k] * (b[k] + c[k]) + d[k]);
      }
    }
    const auto u = fft::irfft(uhat, n);
    auto frame = traj.frame(f);
    std::copy(u.begin(), u.end(), frame.begin());
    check_finite(frame, f, "Burgers solver");
  }
  return traj;
}

Trajectory solve_ns2d_synthetic(std::span<const double> u0, std::size_t n_channels,
                                const SystemParams& params, const GridSpec& grid) {
  grid.validate();
  if (grid.spatial_extents.size() != 2 || u0.size() != n_channels * grid.cells()) {
    throw ShapeError("ns2d-synthetic expects [C][nx][ny] matching the grid");
  }
  const double ax = params.get("ax"), ay = params.get("ay"), spread = params.get("spread");
  const std::size_t nx = grid.spatial_extents[0], ny = grid.spatial_extents[1];
  const std::size_t cells = nx * ny;
  Trajectory traj = empty_trajectory(params, grid, n_channels);
  std::copy(u0.begin(), u0.end(), traj.frames.begin());
  std::vector<cplx> work;
  for (std::size_t c = 0; c < n_channels; ++c) {
    const auto spec = forward_spectrum(u0.subspan(c * cells, cells), nx, ny);
    const double scale = 1.0 + spread * static_cast<double>(c);
    for (std::size_t f = 1; f < grid.n_timesteps; ++f) {
      const double t = static_cast<double>(f) * grid.dt();
      fourier_shift(spec, nx, ny, ax * scale * t, ay * scale * t, work,
                    traj.frame(f).subspan(c * cells, cells));
    }
  }
  for (std::size_t f = 1; f < grid.n_timesteps; ++f) check_finite(traj.frame(f), f, "2D advection");
  return traj;
}

Trajectory generate_trajectory(const SystemParams& params, const GridSpec& grid,
                               const InitialConditionSpec& ic, std::size_t substeps) {
  params.validate();
  Trajectory t;
  switch (params.system) {
    case System::kAdvection:
      t = solve_advection(sample_initial_condition(ic, grid), params.values[0], grid);
      break;
    case System::kBurgers:
      t = solve_burgers(sample_initial_condition(ic, grid), params.values[0], grid, substeps);
      break;
    case System::kNs2dSynthetic: {
      const std::size_t nc = channel_names(params.system).size();
      std::vector<double> u0;
      for (std::size_t c = 0; c < nc; ++c) {
        const auto ch = sample_initial_condition(ic, grid, c);
        u0.insert(u0.end(), ch.begin(), ch.end());
      }
      t = solve_ns2d_synthetic(u0, nc, params, grid);
      break;
    }
  }
  t.params = params;
  t.seed = ic.seed;
  return t;
}

Dataset generate_dataset(System system, const std::vector<std::vector<double>>& params,
                         std::size_t n_traj, const GridSpec& grid, std::uint64_t seed,
                         const GenerateOptions& options) {
  grid.validate();
  if (grid.spatial_extents.size() != spatial_rank(system)) {
    throw ConfigError(std::string(system_name(system)) + " needs a " +
                      std::to_string(spatial_rank(system)) + "D grid");
  }
  for (const auto& p : params) SystemParams{system, p}.validate();
  std::vector<Trajectory> trajs(params.size() * n_traj);
  parallel_for(trajs.size(), options.threads, [&](std::size_t i, std::size_t) {
    InitialConditionSpec ic = options.ic;
    ic.seed = derive_seed(seed, "ic", i % n_traj);
    trajs[i] = generate_trajectory({system, params[i / n_traj]}, grid, ic, options.substeps);
  });
  Dataset ds;
  ds.manifest = make_manifest(system, grid, trajs);
  ds.trajectories = std::move(trajs);
  return ds;
}

}  // namespace pdet
