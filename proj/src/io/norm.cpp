#include "pdet/io/norm.hpp"

#include <algorithm>
#include <cmath>

#include "pdet/core/error.hpp"

namespace pdet {

double NormStats::normalize_param(std::size_t i, double v) const {
  const double lo = param_min.at(i), hi = param_max.at(i);
  if (!(hi > lo)) return 0.0;
  return 2.0 * (v - lo) / (hi - lo) - 1.0;
}

std::vector<double> NormStats::normalize_params(std::span<const double> p) const {
  if (p.size() != param_min.size()) {
    throw DataError("parameter vector has " + std::to_string(p.size()) +
                    " entries, normalization expects " + std::to_string(param_min.size()));
  }
  std::vector<double> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = normalize_param(i, p[i]);
  return out;
}

void NormStats::normalize_frame(std::span<double> frame, std::size_t cells) const {
  for (std::size_t c = 0; c < mean.size(); ++c) {
    const double m = mean[c], inv = 1.0 / std[c];
    for (std::size_t s = 0; s < cells; ++s) {
      auto& v = frame[c * cells + s];
      v = (v - m) * inv;
    }
  }
}

void NormStats::denormalize_frame(std::span<double> frame, std::size_t cells) const {
  for (std::size_t c = 0; c < mean.size(); ++c) {
    const double m = mean[c], sd = std[c];
    for (std::size_t s = 0; s < cells; ++s) {
      auto& v = frame[c * cells + s];
      v = v * sd + m;
    }
  }
}

nlohmann::json NormStats::to_json() const {
  return {{"mean", mean}, {"std", std}, {"param_min", param_min}, {"param_max", param_max}};
}

NormStats NormStats::from_json(const nlohmann::json& j) {
  NormStats s;
  s.mean = j.at("mean").get<std::vector<double>>();
  s.std = j.at("std").get<std::vector<double>>();
  s.param_min = j.at("param_min").get<std::vector<double>>();
  s.param_max = j.at("param_max").get<std::vector<double>>();
  if (s.mean.size() != s.std.size() || s.param_min.size() != s.param_max.size()) {
    throw DataError("inconsistent normalization statistics");
  }
  return s;
}

NormStats compute_norm_stats(std::span<const Trajectory* const> train) {
  if (train.empty()) throw DataError("cannot compute normalization over an empty training split");
  const std::size_t nc = train.front()->n_channels;
  const std::size_t np = train.front()->params.values.size();
  std::vector<double> mean(nc, 0.0), m2(nc, 0.0);
  std::vector<double> count(nc, 0.0);
  NormStats s;
  s.param_min.assign(np, INFINITY);
  s.param_max.assign(np, -INFINITY);
  for (const Trajectory* t : train) {
    if (t->n_channels != nc || t->params.values.size() != np) {
      throw DataError("training trajectories disagree on channel or parameter count");
    }
    const std::size_t cells = t->cells();
    for (std::size_t f = 0; f < t->n_frames; ++f) {
      const auto frame = t->frame(f);
      for (std::size_t c = 0; c < nc; ++c) {
        for (std::size_t i = 0; i < cells; ++i) {
          const double v = frame[c * cells + i];
          count[c] += 1.0;
          const double d = v - mean[c];
          mean[c] += d / count[c];
          m2[c] += d * (v - mean[c]);
        }
      }
    }
    for (std::size_t i = 0; i < np; ++i) {
      s.param_min[i] = std::min(s.param_min[i], t->params.values[i]);
      s.param_max[i] = std::max(s.param_max[i], t->params.values[i]);
    }
  }
  s.mean = mean;
  s.std.resize(nc);
  for (std::size_t c = 0; c < nc; ++c) {
    s.std[c] = std::sqrt(m2[c] / count[c]);
    if (!(s.std[c] > 0.0)) {
      throw DataError("channel " + std::to_string(c) +
                      " has zero variance over the training split (degenerate dataset)");
    }
  }
  return s;
}

NormStats refit_param_map(const NormStats& base, std::span<const std::vector<double>> extra) {
  NormStats s = base;
  for (const auto& p : extra) {
    if (p.size() != s.param_min.size()) throw DataError("parameter arity mismatch in refit");
    for (std::size_t i = 0; i < p.size(); ++i) {
      s.param_min[i] = std::min(s.param_min[i], p[i]);
      s.param_max[i] = std::max(s.param_max[i], p[i]);
    }
  }
  return s;
}

}  // namespace pdet
