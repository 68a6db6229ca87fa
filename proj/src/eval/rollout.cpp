#include "pdet/eval/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "pdet/ad/ops.hpp"
#include "pdet/core/error.hpp"
#include "pdet/core/fft.hpp"
#include "pdet/core/parallel.hpp"
#include "pdet/io/splits.hpp"
#include "pdet/io/windows.hpp"

namespace pdet {

ModelStepper::ModelStepper(const Model& model, NormStats stats, std::string id)
    : model_(model), stats_(std::move(stats)), id_(id.empty() ? model.arch() : std::move(id)) {}

void ModelStepper::step(const StepInput& in, std::span<double> out) const {
  const Trajectory& t = *in.trajectory;
  const std::size_t k = model_.context_length();
  const auto np = stats_.normalize_params(t.params.values);
  ad::Shape shape{k, context_channels(t.n_channels, np.size())};
  for (auto s : t.spatial) shape.push_back(s);
  std::vector<double> ctx(ad::numel(shape));
  fill_context(in.frames, k, t.n_channels, t.cells(), np, in.first,
               1.0 / static_cast<double>(t.n_frames - 1), stats_, ctx);
  ad::NoGradGuard ng;
  const ad::Tensor pred = model_.forward(ad::Tensor::from(shape, std::move(ctx)));
  std::copy(pred.data().begin(), pred.data().end(), out.begin());
  stats_.denormalize_frame(out, t.cells());
}

void PersistenceStepper::step(const StepInput& in, std::span<double> out) const {
  const std::size_t fs = out.size();
  std::copy(in.frames.end() - static_cast<std::ptrdiff_t>(fs), in.frames.end(), out.begin());
}

void AdvectionOracleStepper::step(const StepInput& in, std::span<double> out) const {
  const Trajectory& t = *in.trajectory;
  if (t.params.system != System::kAdvection) {
    throw ConfigError("the advection oracle only applies to advection trajectories");
  }
  const std::size_t n = out.size();
  const auto last = in.frames.subspan(in.frames.size() - n, n);
  auto spec = fft::rfft(last);
  const double shift = t.params.values[0] * in.dt;
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const double ph = -2.0 * std::numbers::pi * static_cast<double>(k) * shift;
    spec[k] *= fft::cplx(std::cos(ph), std::sin(ph));
  }
  const auto u = fft::irfft(spec, n);
  std::copy(u.begin(), u.end(), out.begin());
}

void PassthroughStepper::step(const StepInput& in, std::span<double> out) const {
  const auto f = in.trajectory->frame(in.target);
  std::copy(f.begin(), f.end(), out.begin());
}

RolloutResult rollout(const Stepper& stepper, const Trajectory& traj, double dt) {
  const std::size_t k = stepper.context_length();
  const std::size_t T = traj.n_frames, fs = traj.frame_size();
  if (T < k + 1) {
    throw DataError("rollout needs at least " + std::to_string(k + 1) + " frames, trajectory has " +
                    std::to_string(T));
  }
  RolloutResult r;
  r.frames.assign(T * fs, 0.0);
  std::copy(traj.frames.begin(), traj.frames.begin() + static_cast<std::ptrdiff_t>(k * fs),
            r.frames.begin());
  double total = 0.0;
  for (std::size_t t = k; t < T; ++t) {
    StepInput in{{r.frames.data() + (t - k) * fs, k * fs}, t - k, t, &traj, dt};
    std::span<double> out(r.frames.data() + t * fs, fs);
    stepper.step(in, out);
    double err = 0.0;
    bool finite = true;
    const auto truth = traj.frame(t);
    for (std::size_t i = 0; i < fs; ++i) {
      if (!std::isfinite(out[i])) finite = false;
      const double d = out[i] - truth[i];
      err += d * d;
    }
    if (!finite || !std::isfinite(err)) {
      r.diverged = true;
      r.mse = INFINITY;
      r.frame_mse.resize(T - k, INFINITY);
      return r;
    }
    err /= static_cast<double>(fs);
    r.frame_mse.push_back(err);
    total += err;
  }
  r.mse = total / static_cast<double>(T - k);
  return r;
}

RolloutReport evaluate(const Stepper& stepper, const std::vector<EvalItem>& items, double dt,
                       std::size_t threads) {
  if (items.empty()) throw DataError("evaluation needs a non-empty test split");
  RolloutReport rep;
  rep.model_id = stepper.id();
  rep.k = stepper.context_length();
  rep.horizon = items.front().trajectory->n_frames - rep.k;
  rep.rows.resize(items.size());
  PersistenceStepper persistence(rep.k);
  parallel_for(items.size(), threads, [&](std::size_t i, std::size_t) {
    const auto& it = items[i];
    const auto r = rollout(stepper, *it.trajectory, dt);
    const auto p = rollout(persistence, *it.trajectory, dt);
    auto& row = rep.rows[i];
    row.trajectory_id = it.id;
    row.params = it.trajectory->params.values;
    row.ood = it.ood;
    row.mse = r.mse;
    row.diverged = r.diverged;
    row.persistence_mse = p.mse;
    row.frame_mse = r.frame_mse;
  });

  double id_sum = 0, ood_sum = 0, pid_sum = 0, pood_sum = 0;
  std::size_t id_n = 0, ood_n = 0, pid_n = 0, pood_n = 0;
  for (const auto& row : rep.rows) {
    auto it = std::find_if(rep.per_param.begin(), rep.per_param.end(),
                           [&](const ParamSummary& s) { return same_params(s.params, row.params); });
    if (it == rep.per_param.end()) {
      rep.per_param.push_back({row.params, row.ood, 0, 0, 0.0, 0.0,
                               std::vector<double>(row.frame_mse.size(), 0.0)});
      it = rep.per_param.end() - 1;
    }
    ++it->n;
    it->persistence_mean += row.persistence_mse;
    (row.ood ? pood_sum : pid_sum) += row.persistence_mse;
    ++(row.ood ? pood_n : pid_n);
    if (row.diverged) {
      ++it->n_diverged;
      ++rep.n_diverged;
      continue;
    }
    it->mean += row.mse;
    for (std::size_t f = 0; f < row.frame_mse.size() && f < it->frame_mse.size(); ++f) {
      it->frame_mse[f] += row.frame_mse[f];
    }
    (row.ood ? ood_sum : id_sum) += row.mse;
    ++(row.ood ? ood_n : id_n);
  }
  for (auto& s : rep.per_param) {
    const std::size_t ok = s.n - s.n_diverged;
    s.mean = ok ? s.mean / static_cast<double>(ok) : NAN;
    for (auto& f : s.frame_mse) f = ok ? f / static_cast<double>(ok) : NAN;
    s.persistence_mean /= static_cast<double>(s.n);
  }
  if (id_n) rep.id_mean = id_sum / static_cast<double>(id_n);
  if (ood_n) rep.ood_mean = ood_sum / static_cast<double>(ood_n);
  if (pid_n) rep.persistence_id_mean = pid_sum / static_cast<double>(pid_n);
  if (pood_n) rep.persistence_ood_mean = pood_sum / static_cast<double>(pood_n);
  return rep;
}

namespace {

nlohmann::json opt(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

nlohmann::json finite_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

}  // namespace

nlohmann::json RolloutReport::aggregate_json() const {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["model"] = model_id;
  j["context_length"] = k;
  j["horizon"] = horizon;
  j["scored_frames"] = "k..T-1 (ground-truth seed frames excluded)";
  j["units"] = "physical";
  j["id_mean"] = opt(id_mean);
  j["ood_mean"] = opt(ood_mean);
  j["persistence_id_mean"] = opt(persistence_id_mean);
  j["persistence_ood_mean"] = opt(persistence_ood_mean);
  j["n_trajectories"] = rows.size();
  j["n_diverged"] = n_diverged;
  auto pp = nlohmann::json::array();
  for (const auto& s : per_param) {
    pp.push_back({{"params", s.params},
                  {"ood", s.ood},
                  {"n", s.n},
                  {"n_diverged", s.n_diverged},
                  {"mean", finite_or_null(s.mean)},
                  {"persistence_mean", finite_or_null(s.persistence_mean)}});
  }
  j["per_param"] = std::move(pp);
  auto per = nlohmann::json::array();
  for (const auto& r : rows) {
    per.push_back({{"trajectory_id", r.trajectory_id},
                   {"persistence_mse", finite_or_null(r.persistence_mse)}});
  }
  j["persistence"] = std::move(per);
  return j;
}

nlohmann::json RolloutReport::plot_json() const {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["kind"] = "rollout-error-vs-frame";
  j["x_label"] = "frame index";
  j["y_label"] = "mean squared error (physical units)";
  j["x_scale"] = "linear";
  j["y_scale"] = "log";
  auto series = nlohmann::json::array();
  for (const auto& s : per_param) {
    std::vector<std::size_t> x;
    auto y = nlohmann::json::array();
    for (std::size_t f = 0; f < s.frame_mse.size(); ++f) {
      x.push_back(k + f);
      y.push_back(finite_or_null(s.frame_mse[f]));
    }
    series.push_back({{"name", params_to_string(s.params)}, {"ood", s.ood}, {"x", x}, {"y", y}});
  }
  j["series"] = std::move(series);
  return j;
}

std::string RolloutReport::rows_csv() const {
  std::string out = "trajectory_id,param_vector,mse,diverged\n";
  char buf[64];
  for (const auto& r : rows) {
    out += std::to_string(r.trajectory_id) + "," + params_to_string(r.params) + ",";
    if (r.diverged) {
      out += "inf";
    } else {
      std::snprintf(buf, sizeof buf, "%.17g", r.mse);
      out += buf;
    }
    out += r.diverged ? ",1\n" : ",0\n";
  }
  return out;
}

void RolloutReport::write(const std::filesystem::path& dir, const std::string& stem) const {
  std::filesystem::create_directories(dir);
  auto put = [&](const std::string& name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::trunc);
    if (!out) throw DataError("cannot write " + (dir / name).string());
    out << text;
  };
  put(stem + ".csv", rows_csv());
  put(stem + ".json", aggregate_json().dump(2) + "\n");
  put(stem + "_plot.json", plot_json().dump(2) + "\n");
}

}  // namespace pdet
