// pdet: data generation, training, finetuning, evaluation and studies for
// parametric PDE surrogates. Exit codes: 0 ok, 1 internal, 2 config, 3 data,
// 4 numeric divergence.
#include <cctype>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "cli.hpp"
#include "pdet/core/alloc.hpp"
#include "pdet/core/error.hpp"
#include "pdet/datagen/datagen.hpp"

#ifndef PDET_VERSION
#define PDET_VERSION "0.0.0"
#endif

using namespace pdet;
using namespace pdet::cli;

namespace {

struct Args {
  Globals g;
  GenerateArgs gen;
  SplitArgs split;
  ModelArgs model;
  TrainArgs train;
  TrainArgs finetune;
  std::string data, checkpoint, arch = "vit", axis = "data-size";
  std::vector<std::string> points;
  std::size_t designated = 0;
  bool all = false, per_parameter = false, parallel_points = false;
};

void add_split(CLI::App* c, SplitArgs& s) {
  c->add_option("--id", s.id, "in-domain parameter values (default: every non-ood value)")
      ->delimiter(' ');
  c->add_option("--ood", s.ood, "out-of-domain parameter values; tuples join with '/'")
      ->delimiter(' ');
  c->add_option("--train-fraction", s.train_fraction, "train share of the non-test trajectories");
  c->add_option("--test-per-param", s.test_per_param, "test trajectories per in-domain value");
  c->add_option("--max-per-param", s.max_per_param, "cap on train+val per value (0 = none)");
}

void add_model(CLI::App* c, ModelArgs& m) {
  c->add_option("--context", m.context, "context length k");
  c->add_option("--patch", m.patch, "vit patch size per space axis then time (default 32,1)")
      ->delimiter(',');
  c->add_option("--hidden", m.hidden, "vit hidden size");
  c->add_option("--layers", m.layers, "vit encoder layers");
  c->add_option("--heads", m.heads, "vit attention heads");
  c->add_option("--mlp-ratio", m.mlp_ratio, "vit MLP width / hidden");
  c->add_option("--modes", m.modes, "fno Fourier modes per axis");
  c->add_option("--width", m.width, "fno channel width");
  c->add_option("--fno-layers", m.fno_layers, "fno spectral layers");
  c->add_option("--projection", m.projection, "fno projection width");
}

void add_train(CLI::App* c, TrainArgs& t) {
  c->add_option("--epochs", t.epochs, "maximum epochs");
  c->add_option("--batch-size", t.batch_size, "windows per Adam step");
  c->add_option("--lr", t.lr, "initial learning rate");
  c->add_option("--plateau-factor", t.plateau_factor, "learning rate factor on plateau");
  c->add_option("--plateau-patience", t.plateau_patience, "epochs without improvement per cut");
  c->add_option("--early-stop", t.early_stop, "early-stop patience in epochs (0 = off)");
  c->add_option("--max-steps", t.max_steps, "cap on Adam steps (0 = none)");
  c->add_option("--clip", t.clip, "global gradient norm clip (<= 0 = off)");
  c->add_option("--weight-decay", t.weight_decay, "decoupled weight decay");
  c->add_option("--input-noise", t.input_noise,
                 "std of Gaussian noise on the context state channels (normalized units)");
}

// PDET_<FLAG> for every long flag, e.g. --batch-size -> PDET_BATCH_SIZE.
void attach_env(CLI::App* app) {
  for (CLI::Option* o : app->get_options()) {
    const auto& names = o->get_lnames();
    if (names.empty() || names[0] == "help" || names[0] == "config") continue;
    std::string env = "PDET_";
    for (char ch : names[0]) env += ch == '-' ? '_' : static_cast<char>(std::toupper(ch));
    o->envname(env);
  }
  for (CLI::App* sub : app->get_subcommands({})) attach_env(sub);
}

std::string quote(const std::string& s) {
  std::string q = "\"";
  for (char ch : s) {
    if (ch == '"' || ch == '\\') q += '\\';
    q += ch;
  }
  return q + "\"";
}

// TOML value of an option: what was given, else its default. Empty for an
// empty list, which is then left out.
std::string config_value(const CLI::Option* o) {
  if (o->get_type_size() == 0) {
    const bool on = o->count() > 0 ? o->as<bool>() : o->get_default_str() == "true";
    return on ? "true" : "false";
  }
  std::vector<std::string> vals = o->results();
  if (vals.empty()) {
    std::string d = o->get_default_str();
    if (d == "{}" || d == "[]") return "";
    if (d.size() >= 2 && d.front() == '[' && d.back() == ']') d = d.substr(1, d.size() - 2);
    std::size_t pos = 0;
    while (pos <= d.size() && !d.empty()) {
      const auto next = d.find(',', pos);
      std::string tok = d.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
      while (!tok.empty() && tok.front() == ' ') tok.erase(tok.begin());
      vals.push_back(tok);
      if (next == std::string::npos) break;
      pos = next + 1;
    }
  }
  const bool list = o->get_expected_max() > 1;
  if (!list) return quote(vals.empty() ? "" : vals.front());
  std::string out = "[";
  for (std::size_t i = 0; i < vals.size(); ++i) out += (i ? ", " : "") + quote(vals[i]);
  return out + "]";
}

void say(const Globals& g, const std::string& line) {
  if (!g.quiet) std::cout << line << "\n";
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : "-"; }

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw DataError("cannot write " + p.string());
  out << text;
}

int cmd_generate(const Args& a) {
  const auto& o = a.gen;
  if (o.out.empty()) throw ConfigError("--out is required");
  const System sys = parse_system(o.system);
  const auto params = parse_param_list(o.params);
  if (params.empty()) throw ConfigError("--params lists no parameter values");
  for (const auto& p : params) SystemParams{sys, p}.validate();
  GridSpec grid;
  const std::size_t rank = spatial_rank(sys);
  grid.spatial_extents = o.nx;
  if (grid.spatial_extents.empty()) grid.spatial_extents.assign(rank, rank == 1 ? 256 : 64);
  if (rank == 2 && grid.spatial_extents.size() == 1) {
    grid.spatial_extents.push_back(grid.spatial_extents[0]);
  }
  if (grid.spatial_extents.size() != rank) {
    throw ConfigError("--nx needs " + std::to_string(rank) + " extents for " + o.system);
  }
  grid.n_timesteps = o.timesteps;
  grid.t_final = o.t_final;
  grid.validate();
  GenerateOptions opts;
  opts.ic.n_modes = o.n_modes;
  opts.ic.amplitude_lo = o.amp_lo;
  opts.ic.amplitude_hi = o.amp_hi;
  opts.ic.wavenumber_min = static_cast<int>(o.k_min);
  opts.ic.wavenumber_max = static_cast<int>(o.k_max);
  opts.ic.validate();
  opts.substeps = o.substeps;
  opts.threads = a.g.threads;
  const auto ds = generate_dataset(sys, params, o.n_traj, grid, a.g.seed, opts);
  write_dataset(o.out, ds);
  say(a.g, "wrote " + o.out + ": " + std::to_string(ds.trajectories.size()) + " trajectories, " +
               std::string(system_name(sys)) + ", " + std::to_string(params.size()) +
               " parameter values, T=" + std::to_string(grid.n_timesteps) +
               ", hash " + file_hash(o.out));
  return 0;
}

int cmd_split(const Args& a, const std::string& cfg) {
  DatasetReader reader(a.data);
  const auto& m = reader.manifest();
  const auto plan = make_split_plan(a.split, m);
  const auto split = make_splits(m, plan, a.g.seed);
  const auto dir = open_run_dir(a.g, "split", cfg);
  nlohmann::json j;
  j["schema_version"] = 1;
  j["dataset_hash"] = file_hash(a.data);
  j["seed"] = a.g.seed;
  const char* names[] = {"unused", "train", "val", "test"};
  for (int s = 0; s < 4; ++s) j[names[s]] = split.indices(static_cast<Split>(s));
  write_text(dir / "split.json", j.dump(2) + "\n");
  say(a.g, "train " + std::to_string(split.count(Split::kTrain)) + ", val " +
               std::to_string(split.count(Split::kVal)) + ", test " +
               std::to_string(split.count(Split::kTest)) + ", unused " +
               std::to_string(split.count(Split::kUnused)) + " -> " + dir.string());
  return 0;
}

void print_log(const Globals& g, const TrainResult& r) {
  for (const auto& e : r.log) {
    say(g, "epoch " + std::to_string(e.epoch) + "  train " + fmt(e.train_mse) + "  val " +
               fmt(e.val_mse) + "  lr " + fmt(e.lr));
  }
}

int cmd_train(const Args& a, const std::string& cfg) {
  const auto ds = read_dataset(a.data);
  const auto plan = make_split_plan(a.split, ds.manifest);
  const auto split = make_splits(ds.manifest, plan, a.g.seed);
  const auto tp = make_plan(a.train, a.g);
  const auto spec = make_spec(a.arch, a.model);
  resolve_model_config(spec, ds.manifest);
  const auto dir = open_run_dir(a.g, "train", cfg);
  auto fit = fit_model(spec, ds.manifest, pick(ds, split, Split::kTrain),
                       pick(ds, split, Split::kVal), tp);
  print_log(a.g, fit.result);
  Provenance prov;
  prov.dataset_hash = file_hash(a.data);
  prov.seed = a.g.seed;
  prov.epochs = fit.result.log.size();
  prov.extra = {{"train_plan", tp.to_json()},
                {"steps", fit.result.steps},
                {"best_epoch", fit.result.best_epoch}};
  save_checkpoint(dir / "checkpoint.pdtc", *fit.model, fit.stats, prov);
  write_train_log(dir / "train_log.csv", fit.result.log);
  say(a.g, std::to_string(fit.model->param_count()) + " parameters, best val " +
               fmt(fit.result.best_val) + " -> " + (dir / "checkpoint.pdtc").string());
  return 0;
}

int cmd_finetune(const Args& a, const std::string& cfg) {
  const auto base = load_checkpoint(a.checkpoint);
  const auto ds = read_dataset(a.data);
  const auto plan = make_split_plan(a.split, ds.manifest);
  const auto split = make_splits(ds.manifest, plan, a.g.seed);
  const auto tp = make_plan(a.finetune, a.g);
  const auto dir = open_run_dir(a.g, "finetune", cfg);
  auto fit = finetune_model(*base.model, base.norm, pick(ds, split, Split::kTrain),
                            pick(ds, split, Split::kVal), tp);
  print_log(a.g, fit.result);
  Provenance prov;
  prov.dataset_hash = file_hash(a.data);
  prov.seed = a.g.seed;
  prov.epochs = base.provenance.epochs + fit.result.log.size();
  prov.lineage = file_hash(a.checkpoint);
  prov.extra = {{"finetune_plan", tp.to_json()}, {"base_dataset_hash", base.provenance.dataset_hash}};
  save_checkpoint(dir / "checkpoint.pdtc", *fit.model, fit.stats, prov);
  write_train_log(dir / "train_log.csv", fit.result.log);
  say(a.g, "finetuned " + std::to_string(fit.result.log.size()) + " epochs -> " +
               (dir / "checkpoint.pdtc").string());
  return 0;
}

void print_report(const Globals& g, const RolloutReport& r) {
  say(g, r.model_id + ": id-mean " + fmt(r.id_mean) + ", ood-mean " + fmt(r.ood_mean) +
             " (persistence " + fmt(r.persistence_id_mean) + " / " + fmt(r.persistence_ood_mean) +
             "), diverged " + std::to_string(r.n_diverged) + " of " +
             std::to_string(r.rows.size()));
  for (const auto& p : r.per_param) {
    say(g, "  " + params_to_string(p.params) + (p.ood ? " ood" : " id ") + "  mse " +
               fmt(p.mean) + "  persistence " + fmt(p.persistence_mean));
  }
}

int cmd_evaluate(const Args& a, const std::string& cfg) {
  const auto ck = load_checkpoint(a.checkpoint);
  const auto ds = read_dataset(a.data);
  const auto& t0 = ds.trajectories.at(0);
  check_compatible(*ck.model, ck.norm, t0.n_channels, t0.params.values.size(), t0.spatial);
  const auto plan = make_split_plan(a.split, ds.manifest);
  std::vector<EvalItem> items;
  if (a.all) {
    for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
      items.push_back({&ds.trajectories[i], i, is_ood(plan, ds.trajectories[i].params.values)});
    }
  } else {
    items = test_items(ds, make_splits(ds.manifest, plan, a.g.seed), plan);
  }
  const auto dir = open_run_dir(a.g, "evaluate", cfg);
  ModelStepper st(*ck.model, ck.norm, ck.model->arch());
  const auto rep = evaluate(st, items, ds.manifest.grid.dt(), a.g.threads);
  rep.write(dir, "report");
  print_report(a.g, rep);
  say(a.g, "report -> " + dir.string());
  return 0;
}

int cmd_compare(const Args& a, const std::string& cfg) {
  const auto ds = read_dataset(a.data);
  CompareOptions o;
  o.split = make_split_plan(a.split, ds.manifest);
  o.vit = make_spec("vit", a.model);
  o.fno = make_spec("fno", a.model);
  o.vit_plan = make_plan(a.train, a.g);
  o.fno_plan = o.vit_plan;
  o.designated = a.designated;
  o.seed = a.g.seed;
  o.threads = a.g.threads;
  const auto dir = open_run_dir(a.g, "compare", cfg);
  const auto c = compare_fno(ds, o);
  write_text(dir / "comparison.csv", c.csv());
  write_text(dir / "comparison.json", c.to_json().dump(2) + "\n");
  for (const auto& r : c.rows) {
    say(a.g, r.model + "  id " + fmt(r.id_mean) + "  ood " + fmt(r.ood_mean) + "  (" +
                 std::to_string(r.train_trajectories) + " train trajectories)");
  }
  return 0;
}

int cmd_study(const Args& a, const std::string& cfg) {
  const auto ds = read_dataset(a.data);
  const StudyAxis axis = parse_axis(a.axis);
  std::vector<std::string> names;
  for (const auto& p : a.points) {
    std::string_view s = p;
    std::size_t pos = 0;
    while (pos <= s.size()) {
      const auto next = s.find(',', pos);
      const auto tok = s.substr(pos, next == std::string_view::npos ? s.size() - pos : next - pos);
      if (!tok.empty()) names.emplace_back(tok);
      if (next == std::string_view::npos) break;
      pos = next + 1;
    }
  }
  StudyGrid grid;
  if (axis == StudyAxis::kDataSize) {
    std::vector<std::size_t> n;
    for (const auto& s : names) {
      try {
        n.push_back(std::stoul(s));
      } catch (const std::exception&) {
        throw ConfigError("data-size point '" + s + "' is not a count");
      }
    }
    grid = StudyGrid::data_size(n);
  } else {
    grid = StudyGrid::model_size(names);
  }
  StudyOptions o;
  o.model = make_spec(a.arch, a.model);
  o.plan = make_plan(a.train, a.g);
  o.split = make_split_plan(a.split, ds.manifest);
  o.per_parameter = a.per_parameter;
  o.parallel_points = a.parallel_points;
  o.seed = a.g.seed;
  o.threads = a.g.threads;
  const auto dir = open_run_dir(a.g, "study", cfg);
  o.csv_path = dir / "study.csv";
  const auto r = scaling_study(ds, grid, o);
  write_text(dir / "study_plot.json", r.plot_json().dump(2) + "\n");
  for (const auto& row : r.rows) {
    say(a.g, row.point + "  id " + fmt(row.id_mean) + "  ood " + fmt(row.ood_mean) + "  params " +
                 std::to_string(row.param_count));
  }
  say(a.g, "study -> " + dir.string());
  return 0;
}

// Root options plus the section of the subcommand that ran, defaults
// included; feeding it back through --config repeats the run.
std::string resolved_config(const CLI::App& app) {
  std::string out = "# pdet " PDET_VERSION " resolved configuration\n";
  for (const CLI::Option* o : app.get_options()) {
    const auto& names = o->get_lnames();
    if (names.empty() || names[0] == "help" || names[0] == "config" || names[0] == "version") {
      continue;
    }
    const auto v = config_value(o);
    if (!v.empty()) out += names[0] + "=" + v + "\n";
  }
  for (const CLI::App* sub : app.get_subcommands()) {
    out += "\n[" + sub->get_name() + "]\n";
    for (const CLI::Option* o : sub->get_options()) {
      const auto& names = o->get_lnames();
      if (names.empty() || names[0] == "help") continue;
      const auto v = config_value(o);
      if (!v.empty()) out += names[0] + "=" + v + "\n";
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  Args a;
  CLI::App app{"Parametric PDE surrogates: data, training, evaluation and studies", "pdet"};
  app.option_defaults()->always_capture_default();
  app.set_version_flag("--version", PDET_VERSION);
  app.set_config("--config", "", "TOML config file; command-line flags take precedence");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--seed", a.g.seed, "root seed for every random stream");
  app.add_option("--threads", a.g.threads, "worker threads (0 = all cores)");
  app.add_option("--runs-dir", a.g.runs_dir, "parent of timestamped run directories");
  app.add_option("--run-dir", a.g.run_dir, "explicit run directory");
  app.add_flag("-q,--quiet", a.g.quiet, "suppress progress output");

  auto* gen = app.add_subcommand("generate", "generate a trajectory dataset");
  gen->add_option("--system", a.gen.system, "advection, burgers or ns2d-synthetic");
  gen->add_option("--params", a.gen.params, "parameter values, e.g. 0.1,0.4,2.0 or 1/0.1/0.5")
      ->delimiter(' ')
      ->required();
  gen->add_option("--n-traj", a.gen.n_traj, "trajectories per parameter value");
  gen->add_option("--nx", a.gen.nx, "grid points per axis (default 256; 64,64 in 2D)")->delimiter(',');
  gen->add_option("--timesteps", a.gen.timesteps, "frames per trajectory (T)");
  gen->add_option("--t-final", a.gen.t_final, "time of the last frame");
  gen->add_option("--n-modes", a.gen.n_modes, "sinusoids per initial condition");
  gen->add_option("--amp-lo", a.gen.amp_lo, "smallest mode amplitude");
  gen->add_option("--amp-hi", a.gen.amp_hi, "largest mode amplitude");
  gen->add_option("--k-min", a.gen.k_min, "smallest wavenumber");
  gen->add_option("--k-max", a.gen.k_max, "largest wavenumber");
  gen->add_option("--substeps", a.gen.substeps, "Burgers steps per frame (0 = automatic)");
  gen->add_option("--out", a.gen.out, "output dataset file")->required();

  auto* spl = app.add_subcommand("split", "write the train/val/test assignment of a dataset");
  spl->add_option("--data", a.data, "dataset file")->required()->check(CLI::ExistingFile);
  add_split(spl, a.split);

  auto* tr = app.add_subcommand("train", "train a model on the train split");
  tr->add_option("--data", a.data, "dataset file")->required()->check(CLI::ExistingFile);
  tr->add_option("--arch", a.arch, "vit or fno");
  add_split(tr, a.split);
  add_model(tr, a.model);
  add_train(tr, a.train);

  a.finetune.epochs = 10;
  a.finetune.early_stop = 0;
  auto* ft = app.add_subcommand("finetune", "continue a checkpoint on new parameter values");
  ft->add_option("--checkpoint", a.checkpoint, "base checkpoint")->required()->check(CLI::ExistingFile);
  ft->add_option("--data", a.data, "dataset file")->required()->check(CLI::ExistingFile);
  add_split(ft, a.split);
  add_train(ft, a.finetune);

  auto* ev = app.add_subcommand("evaluate", "autoregressive rollout of a checkpoint");
  ev->add_option("--checkpoint", a.checkpoint, "checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--data", a.data, "dataset file")->required()->check(CLI::ExistingFile);
  ev->add_flag("--all", a.all, "roll out every trajectory instead of the test split");
  add_split(ev, a.split);

  auto* cmp = app.add_subcommand("compare", "ViT against per-parameter and pooled FNOs");
  cmp->add_option("--data", a.data, "dataset file")->required()->check(CLI::ExistingFile);
  cmp->add_option("--designated", a.designated, "index of the FNO[II] parameter among --id");
  add_split(cmp, a.split);
  add_model(cmp, a.model);
  add_train(cmp, a.train);

  auto* st = app.add_subcommand("study", "data-size or model-size scaling study");
  st->add_option("--data", a.data, "dataset file")->required()->check(CLI::ExistingFile);
  st->add_option("--axis", a.axis, "data-size or model-size");
  st->add_option("--points", a.points, "trajectories per value, or small,base,large")
      ->delimiter(' ')
      ->required();
  st->add_option("--arch", a.arch, "vit or fno");
  st->add_flag("--per-parameter", a.per_parameter, "one model per in-domain value");
  st->add_flag("--parallel-points", a.parallel_points, "train grid points concurrently");
  add_split(st, a.split);
  add_model(st, a.model);
  add_train(st, a.train);

  // A [section] in a config file selects that subcommand.
  for (CLI::App* sub : app.get_subcommands({})) sub->configurable();
  attach_env(&app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const std::string cfg = resolved_config(app);
    if (gen->parsed()) return cmd_generate(a);
    if (spl->parsed()) return cmd_split(a, cfg);
    if (tr->parsed()) return cmd_train(a, cfg);
    if (ft->parsed()) return cmd_finetune(a, cfg);
    if (ev->parsed()) return cmd_evaluate(a, cfg);
    if (cmp->parsed()) return cmd_compare(a, cfg);
    if (st->parsed()) return cmd_study(a, cfg);
  } catch (const ConfigError& e) {
    std::cerr << "pdet: config error: " << e.what() << "\n";
    return 2;
  } catch (const DivergenceError& e) {
    std::cerr << "pdet: numeric divergence: " << e.what() << "\n";
    return 4;
  } catch (const DataError& e) {
    std::cerr << "pdet: data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "pdet: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
