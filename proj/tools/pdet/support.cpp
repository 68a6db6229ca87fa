#include <charconv>
#include <chrono>
#include <ctime>
#include <fstream>

#include "cli.hpp"
#include "pdet/core/error.hpp"

#ifndef PDET_VERSION
#define PDET_VERSION "0.0.0"
#endif

namespace pdet::cli {

namespace {

double parse_double(std::string_view s) {
  double v = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) {
    throw ConfigError("not a number: '" + std::string(s) + "'");
  }
  return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = s.find(sep, pos);
    out.push_back(s.substr(pos, next == std::string_view::npos ? next : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

}  // namespace

// "0.1,0.4" -> {{0.1},{0.4}}; tuples join components with '/': "1/0.1/0.1".
std::vector<std::vector<double>> parse_param_list(const std::vector<std::string>& items) {
  std::vector<std::vector<double>> out;
  for (const auto& item : items) {
    for (auto tok : split(item, ',')) {
      if (tok.empty()) continue;
      std::vector<double> p;
      for (auto c : split(tok, '/')) p.push_back(parse_double(c));
      out.push_back(std::move(p));
    }
  }
  return out;
}

SplitPlan make_split_plan(const SplitArgs& a, const DatasetManifest& manifest) {
  SplitPlan plan;
  plan.ood_params = parse_param_list(a.ood);
  plan.id_params = parse_param_list(a.id);
  if (plan.id_params.empty()) {
    for (auto& p : distinct_params(manifest)) {
      if (!is_ood(plan, p)) plan.id_params.push_back(std::move(p));
    }
  }
  plan.train_fraction = a.train_fraction;
  plan.test_per_param = a.test_per_param;
  plan.max_train_val_per_param = a.max_per_param;
  plan.validate();
  return plan;
}

ModelSpec make_spec(const std::string& arch, const ModelArgs& m) {
  ModelSpec s;
  s.arch = arch;
  if (arch == "vit") {
    s.config = {{"context", m.context}, {"hidden", m.hidden}, {"layers", m.layers},
                {"heads", m.heads},     {"mlp_ratio", m.mlp_ratio}};
    if (!m.patch.empty()) s.config["patch"] = m.patch;
  } else if (arch == "fno") {
    s.config = {{"context", m.context}, {"modes", m.modes}, {"width", m.width},
                {"layers", m.fno_layers}, {"projection", m.projection}};
  } else {
    throw ConfigError("unknown architecture '" + arch + "' (expected vit or fno)");
  }
  return s;
}

TrainPlan make_plan(const TrainArgs& t, const Globals& g) {
  TrainPlan p;
  p.max_epochs = t.epochs;
  p.batch_size = t.batch_size;
  p.lr = t.lr;
  p.plateau_factor = t.plateau_factor;
  p.plateau_patience = t.plateau_patience;
  p.early_stop_patience = t.early_stop;
  p.max_steps = t.max_steps;
  p.clip_norm = t.clip;
  p.weight_decay = t.weight_decay;
  p.input_noise = t.input_noise;
  p.seed = g.seed;
  p.threads = g.threads;
  p.validate();
  return p;
}

std::filesystem::path open_run_dir(const Globals& g, const std::string& command,
                                   const std::string& resolved_config) {
  std::filesystem::path dir;
  if (!g.run_dir.empty()) {
    dir = g.run_dir;
  } else {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%SZ", &tm);
    const auto base = std::filesystem::path(g.runs_dir) /
                      (std::string(stamp) + "-seed" + std::to_string(g.seed) + "-" + command);
    dir = base;
    for (int i = 1; std::filesystem::exists(dir); ++i) dir = base.string() + "." + std::to_string(i);
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create run directory " + dir.string() + ": " + ec.message());
  std::ofstream(dir / "config.toml") << resolved_config;
  const nlohmann::json run = {{"tool", "pdet"},
                              {"tool_version", PDET_VERSION},
                              {"command", command},
                              {"seed", g.seed},
                              {"threads", g.threads}};
  std::ofstream(dir / "run.json") << run.dump(2) << "\n";
  return dir;
}

}  // namespace pdet::cli
