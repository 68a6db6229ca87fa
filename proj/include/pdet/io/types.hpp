#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pdet {

enum class System { kAdvection, kBurgers, kNs2dSynthetic };

std::string_view system_name(System s);
System parse_system(std::string_view name);
std::vector<std::string> param_names(System s);
std::vector<std::string> channel_names(System s);
std::size_t spatial_rank(System s);

// A point in a system's parameter space, values ordered as param_names().
struct SystemParams {
  System system = System::kAdvection;
  std::vector<double> values;

  double get(std::string_view name) const;
  // Throws ConfigError on missing values or violated positivity.
  void validate() const;
};

// Uniform periodic grid on the unit interval / square.
struct GridSpec {
  std::vector<std::size_t> spatial_extents{256};
  std::size_t n_timesteps = 41;
  double t_final = 2.0;

  double dt() const { return t_final / static_cast<double>(n_timesteps - 1); }
  std::size_t cells() const;
  void validate() const;
};

// frames are [T][C][spatial row-major].
struct Trajectory {
  SystemParams params;
  std::uint64_t seed = 0;
  std::size_t n_frames = 0;
  std::size_t n_channels = 0;
  std::vector<std::size_t> spatial;
  std::vector<double> frames;

  std::size_t cells() const;
  std::size_t frame_size() const { return n_channels * cells(); }
  std::span<const double> frame(std::size_t t) const {
    return {frames.data() + t * frame_size(), frame_size()};
  }
  std::span<double> frame(std::size_t t) {
    return {frames.data() + t * frame_size(), frame_size()};
  }
};

// Parameter vectors compare equal within a relative 1e-12.
bool same_params(std::span<const double> a, std::span<const double> b);
std::string params_to_string(std::span<const double> p);

}  // namespace pdet
