#include "pdet/eval/study.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "pdet/core/error.hpp"
#include "pdet/core/parallel.hpp"
#include "pdet/core/rng.hpp"
#include "pdet/io/windows.hpp"
#include "pdet/model/fno.hpp"
#include "pdet/model/vit.hpp"

namespace pdet {

nlohmann::json resolve_model_config(const ModelSpec& spec, const DatasetManifest& manifest) {
  nlohmann::json base;
  if (spec.arch == "vit") {
    base = ViTConfig{}.to_json();
  } else if (spec.arch == "fno") {
    base = FNOConfig{}.to_json();
  } else {
    throw ConfigError("unknown model architecture '" + spec.arch + "' (expected vit or fno)");
  }
  if (!spec.config.is_object()) throw ConfigError(spec.arch + " config must be an object");
  for (const auto& [key, value] : spec.config.items()) {
    if (!base.contains(key)) throw ConfigError("unknown " + spec.arch + " config key '" + key + "'");
    base[key] = value;
  }
  const auto& ext = manifest.grid.spatial_extents;
  base["spatial"] = ext;
  base["out_channels"] = manifest.channels.size();
  base["in_channels"] = context_channels(manifest.channels.size(), manifest.param_names.size());
  if (spec.arch == "vit" && !spec.config.contains("patch") && ext.size() != 1) {
    std::vector<std::size_t> patch(ext.size(), 16);
    patch.push_back(1);
    base["patch"] = patch;
  }
  // Round-trip through the typed config so errors surface here.
  if (spec.arch == "vit") return ViTConfig::from_json(base).to_json();
  return FNOConfig::from_json(base).to_json();
}

FitOutcome fit_model(const ModelSpec& spec, const DatasetManifest& manifest,
                     const std::vector<const Trajectory*>& train_set,
                     const std::vector<const Trajectory*>& val_set, const TrainPlan& plan) {
  if (train_set.empty()) throw DataError("training split is empty");
  FitOutcome out;
  out.stats = compute_norm_stats(train_set);
  out.model = make_model(spec.arch, resolve_model_config(spec, manifest),
                         derive_seed(plan.seed, "init", 0));
  const std::size_t k = out.model->context_length();
  const WindowSet tr(train_set, k, out.stats);
  const WindowSet va(val_set, k, out.stats);
  out.result = train(*out.model, tr, va, plan);
  return out;
}

FitOutcome finetune_model(const Model& base, const NormStats& base_stats,
                          const std::vector<const Trajectory*>& train_set,
                          const std::vector<const Trajectory*>& val_set, const TrainPlan& plan) {
  if (train_set.empty()) throw DataError("finetuning split is empty");
  std::vector<std::vector<double>> extra;
  for (const auto* t : train_set) extra.push_back(t->params.values);
  for (const auto* t : val_set) extra.push_back(t->params.values);
  FitOutcome out;
  out.stats = refit_param_map(base_stats, extra);
  out.model = base.clone();
  const auto& t0 = *train_set.front();
  check_compatible(*out.model, out.stats, t0.n_channels, t0.params.values.size(), t0.spatial);
  const std::size_t k = out.model->context_length();
  const WindowSet tr(train_set, k, out.stats);
  const WindowSet va(val_set, k, out.stats);
  out.result = finetune(*out.model, tr, va, plan);
  return out;
}

std::vector<const Trajectory*> pick(const Dataset& data, const SplitAssignment& split, Split which,
                                    const std::vector<double>* only) {
  std::vector<const Trajectory*> out;
  for (std::size_t i : split.indices(which)) {
    const auto& t = data.trajectories[i];
    if (only && !same_params(t.params.values, *only)) continue;
    out.push_back(&t);
  }
  return out;
}

std::vector<EvalItem> test_items(const Dataset& data, const SplitAssignment& split,
                                 const SplitPlan& plan, const std::vector<double>* only) {
  std::vector<EvalItem> items;
  for (std::size_t i : split.indices(Split::kTest)) {
    const auto& t = data.trajectories[i];
    if (only && !same_params(t.params.values, *only)) continue;
    items.push_back({&t, i, is_ood(plan, t.params.values)});
  }
  return items;
}

namespace {

std::string fmt(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", *v);
  return buf;
}

nlohmann::json opt(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

// Mean over the non-diverged id rows of several reports.
std::optional<double> pooled_id_mean(const std::vector<RolloutReport>& reps, bool persistence) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : reps) {
    for (const auto& row : r.rows) {
      if (row.ood) continue;
      if (persistence) {
        sum += row.persistence_mse;
        ++n;
      } else if (!row.diverged) {
        sum += row.mse;
        ++n;
      }
    }
  }
  if (!n) return std::nullopt;
  return sum / static_cast<double>(n);
}

double dt_of(const Dataset& data) { return data.manifest.grid.dt(); }

}  // namespace

Comparison compare_fno(const Dataset& data, const CompareOptions& opts) {
  const auto& ids = opts.split.id_params;
  if (ids.size() < 2) throw ConfigError("comparison needs at least two in-domain parameters");
  if (opts.designated >= ids.size()) throw ConfigError("designated FNO[II] parameter out of range");
  const auto split = make_splits(data.manifest, opts.split, opts.seed);
  const double dt = dt_of(data);
  Comparison cmp;

  {
    auto fit = fit_model(opts.vit, data.manifest, pick(data, split, Split::kTrain),
                         pick(data, split, Split::kVal), opts.vit_plan);
    ModelStepper st(*fit.model, fit.stats, "vit");
    const auto rep = evaluate(st, test_items(data, split, opts.split), dt, opts.threads);
    cmp.rows.push_back({"vit", rep.id_mean, rep.ood_mean, rep.persistence_id_mean,
                        split.count(Split::kTrain), fit.model->param_count()});
  }

  std::vector<RolloutReport> per;
  std::vector<CompareRow> detail;
  std::size_t n = 0;
  std::size_t fno_params = 0;
  for (const auto& p : ids) {
    const auto tr = pick(data, split, Split::kTrain, &p);
    n = std::max(n, tr.size());
    auto fit = fit_model(opts.fno, data.manifest, tr, pick(data, split, Split::kVal, &p),
                         opts.fno_plan);
    fno_params = fit.model->param_count();
    ModelStepper st(*fit.model, fit.stats, "fno-i");
    per.push_back(evaluate(st, test_items(data, split, opts.split, &p), dt, opts.threads));
    detail.push_back({"fno-i[" + params_to_string(p) + "]", per.back().id_mean, std::nullopt,
                      per.back().persistence_id_mean, tr.size(), fno_params});
  }
  cmp.rows.push_back({"fno-i", pooled_id_mean(per, false), std::nullopt,
                      pooled_id_mean(per, true), n, fno_params});

  // FNO[II]: n * P trajectories of one parameter, drawn from everything of
  // that parameter outside its test and validation sets.
  const auto& d = ids[opts.designated];
  std::vector<const Trajectory*> pool = pick(data, split, Split::kTrain, &d);
  for (const auto* t : pick(data, split, Split::kUnused, &d)) pool.push_back(t);
  const std::size_t need = n * ids.size();
  if (pool.size() < need) {
    throw DataError("FNO[II] needs " + std::to_string(need) + " trajectories of " +
                    params_to_string(d) + " outside test/val, dataset has " +
                    std::to_string(pool.size()));
  }
  pool.resize(need);
  auto fit = fit_model(opts.fno, data.manifest, pool, pick(data, split, Split::kVal, &d),
                       opts.fno_plan);
  ModelStepper st(*fit.model, fit.stats, "fno-ii");
  const auto rep = evaluate(st, test_items(data, split, opts.split, &d), dt, opts.threads);
  cmp.rows.push_back({"fno-ii", rep.id_mean, std::nullopt, rep.persistence_id_mean, need,
                      fit.model->param_count()});
  for (auto& r : detail) cmp.rows.push_back(std::move(r));
  return cmp;
}

std::string Comparison::csv() const {
  std::string out = "model,id_mean,ood_mean\n";
  for (const auto& r : rows) out += r.model + "," + fmt(r.id_mean) + "," + fmt(r.ood_mean) + "\n";
  return out;
}

nlohmann::json Comparison::to_json() const {
  auto arr = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back({{"model", r.model},
                   {"id_mean", opt(r.id_mean)},
                   {"ood_mean", opt(r.ood_mean)},
                   {"persistence_id_mean", opt(r.persistence_id_mean)},
                   {"train_trajectories", r.train_trajectories},
                   {"param_count", r.param_count}});
  }
  return {{"schema_version", 1}, {"rows", arr}};
}

StudyGrid StudyGrid::data_size(const std::vector<std::size_t>& per_param) {
  StudyGrid g;
  g.axis = StudyAxis::kDataSize;
  for (auto n : per_param) g.points.push_back({std::to_string(n), n, 0, 0});
  g.validate();
  return g;
}

StudyGrid StudyGrid::model_size(const std::vector<std::string>& names) {
  StudyGrid g;
  g.axis = StudyAxis::kModelSize;
  for (const auto& name : names) {
    StudyPoint p{name, 0, 0, 0};
    if (name == "small") {
      p.layers = 2, p.hidden = 128;
    } else if (name == "base") {
      p.layers = 4, p.hidden = 256;
    } else if (name == "large") {
      p.layers = 8, p.hidden = 512;
    } else if (std::sscanf(name.c_str(), "L%zuH%zu", &p.layers, &p.hidden) != 2) {
      throw ConfigError("unknown model size '" + name + "' (small, base, large or L<n>H<n>)");
    }
    g.points.push_back(p);
  }
  g.validate();
  return g;
}

void StudyGrid::validate() const {
  if (points.empty()) throw ConfigError("study grid has no points");
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    if (axis == StudyAxis::kDataSize) {
      if (p.trajectories == 0) throw ConfigError("data-size points must be positive");
      if (i && p.trajectories <= points[i - 1].trajectories) {
        throw ConfigError("data-size points must be strictly increasing");
      }
    } else {
      if (!p.layers || !p.hidden) throw ConfigError("model-size points need layers and hidden");
      if (i && p.hidden * p.hidden * p.layers <=
                   points[i - 1].hidden * points[i - 1].hidden * points[i - 1].layers) {
        throw ConfigError("model-size points must be strictly increasing");
      }
    }
  }
}

std::string axis_name(StudyAxis a) { return a == StudyAxis::kDataSize ? "data-size" : "model-size"; }

StudyAxis parse_axis(const std::string& s) {
  if (s == "data-size") return StudyAxis::kDataSize;
  if (s == "model-size") return StudyAxis::kModelSize;
  throw ConfigError("unknown study axis '" + s + "' (data-size or model-size)");
}

namespace {

StudyRow run_point(const Dataset& data, const StudyGrid& grid, const StudyOptions& opts,
                   const StudyPoint& pt) {
  SplitPlan sp = opts.split;
  ModelSpec spec = opts.model;
  if (grid.axis == StudyAxis::kDataSize) {
    sp.max_train_val_per_param =
        static_cast<std::size_t>(std::ceil(static_cast<double>(pt.trajectories) / sp.train_fraction - 1e-9));
  } else {
    if (spec.arch != "vit") throw ConfigError("model-size studies apply to the vit arch");
    spec.config["layers"] = pt.layers;
    spec.config["hidden"] = pt.hidden;
  }
  const auto split = make_splits(data.manifest, sp, opts.seed);
  if (grid.axis == StudyAxis::kDataSize) {
    for (const auto& p : sp.id_params) {
      const auto n = pick(data, split, Split::kTrain, &p).size();
      if (n != pt.trajectories) {
        throw DataError("point " + pt.label + ": parameter " + params_to_string(p) + " has " +
                        std::to_string(n) + " training trajectories");
      }
    }
  }
  const double dt = data.manifest.grid.dt();
  StudyRow row;
  row.point = pt.label;
  std::vector<RolloutReport> reps;
  if (opts.per_parameter) {
    for (const auto& p : sp.id_params) {
      auto fit = fit_model(spec, data.manifest, pick(data, split, Split::kTrain, &p),
                           pick(data, split, Split::kVal, &p), opts.plan);
      row.param_count = fit.model->param_count();
      ModelStepper st(*fit.model, fit.stats);
      reps.push_back(evaluate(st, test_items(data, split, sp, &p), dt, opts.threads));
    }
    row.id_mean = pooled_id_mean(reps, false);
    row.persistence_id_mean = pooled_id_mean(reps, true);
  } else {
    auto fit = fit_model(spec, data.manifest, pick(data, split, Split::kTrain),
                         pick(data, split, Split::kVal), opts.plan);
    row.param_count = fit.model->param_count();
    ModelStepper st(*fit.model, fit.stats);
    reps.push_back(evaluate(st, test_items(data, split, sp), dt, opts.threads));
    row.id_mean = reps.back().id_mean;
    row.ood_mean = reps.back().ood_mean;
    row.persistence_id_mean = reps.back().persistence_id_mean;
  }
  for (const auto& r : reps) row.n_diverged += r.n_diverged;
  row.train_trajectories = split.count(Split::kTrain);
  row.x = grid.axis == StudyAxis::kDataSize ? static_cast<double>(pt.trajectories)
                                            : static_cast<double>(row.param_count);
  return row;
}

}  // namespace

StudyResult scaling_study(const Dataset& data, const StudyGrid& grid, const StudyOptions& opts) {
  grid.validate();
  StudyResult res;
  res.axis = grid.axis;
  std::ofstream csv;
  if (!opts.csv_path.empty()) {
    csv.open(opts.csv_path, std::ios::trunc);
    if (!csv) throw DataError("cannot write " + opts.csv_path.string());
    csv << StudyResult::csv_header() << std::flush;
  }
  if (opts.parallel_points) {
    std::vector<StudyRow> rows(grid.points.size());
    std::vector<char> done(grid.points.size(), 0);
    try {
      parallel_for(grid.points.size(), 0, [&](std::size_t i, std::size_t) {
        rows[i] = run_point(data, grid, opts, grid.points[i]);
        done[i] = 1;
      });
    } catch (...) {
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (done[i] && csv) csv << StudyResult::csv_row(rows[i]) << std::flush;
      }
      throw;
    }
    for (auto& r : rows) {
      if (csv) csv << StudyResult::csv_row(r);
      res.rows.push_back(std::move(r));
    }
    return res;
  }
  for (const auto& pt : grid.points) {
    res.rows.push_back(run_point(data, grid, opts, pt));
    if (csv) csv << StudyResult::csv_row(res.rows.back()) << std::flush;
  }
  return res;
}

std::string StudyResult::csv_header() {
  return "point,x,id_mean,ood_mean,persistence_id_mean,param_count,train_trajectories,n_diverged\n";
}

std::string StudyResult::csv_row(const StudyRow& r) {
  char x[40];
  std::snprintf(x, sizeof x, "%.17g", r.x);
  return r.point + "," + x + "," + fmt(r.id_mean) + "," + fmt(r.ood_mean) + "," +
         fmt(r.persistence_id_mean) + "," + std::to_string(r.param_count) + "," +
         std::to_string(r.train_trajectories) + "," + std::to_string(r.n_diverged) + "\n";
}

std::string StudyResult::csv() const {
  std::string out = csv_header();
  for (const auto& r : rows) out += csv_row(r);
  return out;
}

nlohmann::json StudyResult::plot_json() const {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["kind"] = "scaling-" + axis_name(axis);
  j["x_label"] = axis == StudyAxis::kDataSize ? "trajectories per parameter value"
                                               : "learnable parameters";
  j["y_label"] = "rollout mean squared error (physical units)";
  j["x_scale"] = "log";
  j["y_scale"] = "log";
  auto x = nlohmann::json::array(), id = nlohmann::json::array(), ood = nlohmann::json::array();
  auto labels = nlohmann::json::array();
  for (const auto& r : rows) {
    x.push_back(r.x);
    labels.push_back(r.point);
    id.push_back(opt(r.id_mean));
    ood.push_back(opt(r.ood_mean));
  }
  j["x"] = x;
  j["labels"] = labels;
  j["series"] = nlohmann::json::array({{{"name", "id"}, {"y", id}}, {{"name", "ood"}, {"y", ood}}});
  return j;
}

}  // namespace pdet
