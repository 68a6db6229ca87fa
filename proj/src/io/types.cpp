#include "pdet/io/types.hpp"

#include <cmath>
#include <numeric>
#include <algorithm>
#include <charconv>

#include "pdet/core/error.hpp"

namespace pdet {

std::string_view system_name(System s) {
  switch (s) {
    case System::kAdvection: return "advection";
    case System::kBurgers: return "burgers";
    case System::kNs2dSynthetic: return "ns2d-synthetic";
  }
  return "unknown";
}

System parse_system(std::string_view name) {
  if (name == "advection") return System::kAdvection;
  if (name == "burgers") return System::kBurgers;
  if (name == "ns2d-synthetic") return System::kNs2dSynthetic;
  throw ConfigError("unknown system '" + std::string(name) +
                    "' (expected advection, burgers or ns2d-synthetic)");
}

std::vector<std::string> param_names(System s) {
  switch (s) {
    case System::kAdvection: return {"a"};
    case System::kBurgers: return {"nu"};
    case System::kNs2dSynthetic: return {"ax", "ay", "spread"};
  }
  return {};
}

std::vector<std::string> channel_names(System s) {
  if (s == System::kNs2dSynthetic) return {"rho", "vx", "vy", "p"};
  return {"u"};
}

std::size_t spatial_rank(System s) { return s == System::kNs2dSynthetic ? 2 : 1; }

double SystemParams::get(std::string_view name) const {
  const auto names = param_names(system);
  for (std::size_t i = 0; i < names.size() && i < values.size(); ++i) {
    if (names[i] == name) return values[i];
  }
  throw ConfigError("parameter '" + std::string(name) + "' not set for system " +
                    std::string(system_name(system)));
}

void SystemParams::validate() const {
  const auto names = param_names(system);
  if (values.size() != names.size()) {
    throw ConfigError(std::string(system_name(system)) + " expects " +
                      std::to_string(names.size()) + " parameter value(s), got " +
                      std::to_string(values.size()));
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw ConfigError("parameter values must be finite");
  }
  if (system == System::kAdvection && !(values[0] > 0.0)) {
    throw ConfigError("advection speed a must be > 0, got " + params_to_string(values));
  }
  if (system == System::kBurgers && !(values[0] > 0.0)) {
    throw ConfigError("Burgers viscosity nu must be > 0, got " + params_to_string(values));
  }
}

std::size_t GridSpec::cells() const {
  return std::accumulate(spatial_extents.begin(), spatial_extents.end(), std::size_t{1},
                         std::multiplies<>());
}

void GridSpec::validate() const {
  if (spatial_extents.empty() || spatial_extents.size() > 2) {
    throw ConfigError("grid must have 1 or 2 spatial axes");
  }
  for (std::size_t n : spatial_extents) {
    if (n < 2 || (n & (n - 1)) != 0) {
      throw ConfigError("grid extents must be powers of two >= 2, got " + std::to_string(n));
    }
  }
  if (n_timesteps < 2) throw ConfigError("grid needs at least 2 timesteps");
  if (!(t_final > 0.0)) throw ConfigError("t_final must be > 0");
}

std::size_t Trajectory::cells() const {
  return std::accumulate(spatial.begin(), spatial.end(), std::size_t{1}, std::multiplies<>());
}

bool same_params(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), 1e-300});
    if (std::abs(a[i] - b[i]) > 1e-12 * scale) return false;
  }
  return true;
}

std::string params_to_string(std::span<const double> p) {
  std::string out;
  char buf[32];
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (i) out += ';';
    auto res = std::to_chars(buf, buf + sizeof buf, p[i]);
    out.append(buf, res.ptr);
  }
  return out;
}

}  // namespace pdet
