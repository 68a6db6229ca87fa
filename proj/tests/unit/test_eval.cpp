#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "pdet/core/error.hpp"
#include "pdet/datagen/datagen.hpp"
#include "pdet/eval/rollout.hpp"
#include "pdet/eval/study.hpp"
#include "pdet/model/vit.hpp"

using namespace pdet;

namespace {

Trajectory static_trajectory(std::size_t T, std::size_t nx, double a = 0.0) {
  Trajectory t;
  t.params = {System::kAdvection, {a}};
  t.n_frames = T;
  t.n_channels = 1;
  t.spatial = {nx};
  t.frames.resize(T * nx);
  for (std::size_t f = 0; f < T; ++f) {
    for (std::size_t i = 0; i < nx; ++i) t.frames[f * nx + i] = std::sin(0.3 * static_cast<double>(i));
  }
  return t;
}

// Truth plus a per-trajectory constant: every frame error is offset^2.
class OffsetStepper final : public Stepper {
 public:
  OffsetStepper(std::size_t k, double scale) : k_(k), scale_(scale) {}
  std::string id() const override { return "offset"; }
  std::size_t context_length() const override { return k_; }
  void step(const StepInput& in, std::span<double> out) const override {
    const auto f = in.trajectory->frame(in.target);
    const double c = scale_ * in.trajectory->params.values[0];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::isnan(scale_) ? NAN : f[i] + c;
  }

 private:
  std::size_t k_;
  double scale_;
};

// Last context frame plus one: drift compounds only if predictions feed back.
class DriftStepper final : public Stepper {
 public:
  explicit DriftStepper(std::size_t k) : k_(k) {}
  std::string id() const override { return "drift"; }
  std::size_t context_length() const override { return k_; }
  void step(const StepInput& in, std::span<double> out) const override {
    const auto last = in.frames.subspan(in.frames.size() - out.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = last[i] + 1.0;
  }

 private:
  std::size_t k_;
};

GridSpec small_grid() {
  GridSpec g;
  g.spatial_extents = {16};
  g.n_timesteps = 9;
  g.t_final = 0.4;
  return g;
}

TrainPlan quick_plan(std::uint64_t seed) {
  TrainPlan p;
  p.max_epochs = 1;
  p.batch_size = 8;
  p.seed = seed;
  return p;
}

ModelSpec tiny_vit() {
  return {"vit", {{"context", 4}, {"patch", {4, 1}}, {"hidden", 16}, {"layers", 1}, {"heads", 2}}};
}

ModelSpec tiny_fno() {
  return {"fno", {{"context", 4}, {"modes", 4}, {"width", 4}, {"layers", 1}, {"projection", 8}}};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("advection oracle rollout is exact") {
  GridSpec g;
  for (double a : {0.1, 0.4, 2.0, 0.2, 1.0, 4.0}) {
    const auto ds = generate_dataset(System::kAdvection, {{a}}, 2, g, 17);
    AdvectionOracleStepper oracle(8);
    for (const auto& t : ds.trajectories) {
      const auto r = rollout(oracle, t, g.dt());
      CHECK_FALSE(r.diverged);
      CHECK(r.mse < 1e-10);
      CHECK(r.frame_mse.size() == g.n_timesteps - 8);
    }
  }
}

TEST_CASE("persistence is exact on a static solution") {
  const auto t = static_trajectory(12, 32);
  PersistenceStepper p(4);
  const auto r = rollout(p, t, 0.1);
  CHECK(r.mse == 0.0);
  for (std::size_t f = 0; f < 4; ++f) {
    for (std::size_t i = 0; i < 32; ++i) CHECK(r.frames[f * 32 + i] == t.frames[f * 32 + i]);
  }
}

TEST_CASE("rollout feeds predictions back into the context") {
  const auto t = static_trajectory(10, 8);
  DriftStepper d(3);
  const auto r = rollout(d, t, 0.1);
  REQUIRE(r.frame_mse.size() == 7);
  double sum = 0.0;
  for (std::size_t j = 0; j < 7; ++j) {
    const double e = static_cast<double>((j + 1) * (j + 1));
    CHECK(std::abs(r.frame_mse[j] - e) < 1e-12);
    sum += e;
  }
  CHECK(std::abs(r.mse - sum / 7.0) < 1e-12);
}

TEST_CASE("rollout needs more frames than the context") {
  const auto t = static_trajectory(4, 8);
  PersistenceStepper p(4);
  CHECK_THROWS_AS(rollout(p, t, 0.1), DataError);
}

TEST_CASE("evaluate aggregates per trajectory, per parameter, id and ood") {
  std::vector<Trajectory> ts;
  for (double a : {1.0, 1.0, 2.0, 3.0, 3.0}) ts.push_back(static_trajectory(8, 16, a));
  std::vector<EvalItem> items;
  for (std::size_t i = 0; i < ts.size(); ++i) items.push_back({&ts[i], i, ts[i].params.values[0] == 3.0});

  SUBCASE("passthrough scores zero and ood is absent without ood rows") {
    PassthroughStepper pass(4);
    std::vector<EvalItem> id_only(items.begin(), items.begin() + 3);
    const auto rep = evaluate(pass, id_only, 0.1);
    for (const auto& r : rep.rows) CHECK(r.mse == 0.0);
    REQUIRE(rep.id_mean);
    CHECK(*rep.id_mean == 0.0);
    CHECK_FALSE(rep.ood_mean.has_value());
    CHECK(rep.aggregate_json()["ood_mean"].is_null());
    CHECK(rep.aggregate_json()["schema_version"] == 1);
  }

  SUBCASE("hand averages") {
    OffsetStepper off(4, 0.5);
    const auto rep = evaluate(off, items, 0.1, 3);
    CHECK(rep.horizon == 4);
    double id = 0;
    for (std::size_t i = 0; i < 3; ++i) {
      const double c = 0.5 * ts[i].params.values[0];
      CHECK(std::abs(rep.rows[i].mse - c * c) < 1e-12);
      id += rep.rows[i].mse;
    }
    CHECK(std::abs(*rep.id_mean - id / 3.0) < 1e-12);
    CHECK(std::abs(*rep.ood_mean - 0.5 * (rep.rows[3].mse + rep.rows[4].mse)) < 1e-12);
    REQUIRE(rep.per_param.size() == 3);
    CHECK(rep.per_param[0].n == 2);
    CHECK(std::abs(rep.per_param[0].mean - 0.25) < 1e-12);
    // Static fields: persistence is exact.
    CHECK(*rep.persistence_id_mean == 0.0);
    CHECK(*rep.persistence_ood_mean == 0.0);
    const auto csv = rep.rows_csv();
    CHECK(csv.rfind("trajectory_id,param_vector,mse,diverged\n", 0) == 0);
    CHECK(rep.plot_json()["series"].size() == 3);
  }

  SUBCASE("diverged rows are flagged and excluded") {
    OffsetStepper bad(4, NAN);
    PassthroughStepper pass(4);
    auto rep = evaluate(bad, {items[0]}, 0.1);
    CHECK(rep.rows[0].diverged);
    CHECK(std::isinf(rep.rows[0].mse));
    CHECK(rep.n_diverged == 1);
    CHECK_FALSE(rep.id_mean.has_value());
    CHECK(rep.rows_csv().find(",inf,1\n") != std::string::npos);
  }

  CHECK_THROWS_AS(evaluate(PersistenceStepper(4), {}, 0.1), DataError);
}

TEST_CASE("model rollouts are deterministic across thread counts") {
  const auto ds = generate_dataset(System::kAdvection, {{0.5}, {1.0}}, 2, small_grid(), 9);
  std::vector<const Trajectory*> tr;
  for (const auto& t : ds.trajectories) tr.push_back(&t);
  auto fit = fit_model(tiny_vit(), ds.manifest, tr, {}, quick_plan(4));
  ModelStepper st(*fit.model, fit.stats);
  const auto a = rollout(st, ds.trajectories[0], 0.05);
  const auto b = rollout(st, ds.trajectories[0], 0.05);
  CHECK(a.frames == b.frames);
  std::vector<EvalItem> items;
  for (std::size_t i = 0; i < ds.trajectories.size(); ++i) items.push_back({&ds.trajectories[i], i, false});
  CHECK(evaluate(st, items, 0.05, 1).rows_csv() == evaluate(st, items, 0.05, 3).rows_csv());
}

TEST_CASE("model config resolution") {
  const auto ds = generate_dataset(System::kAdvection, {{0.5}}, 1, small_grid(), 1);
  const auto j = resolve_model_config(tiny_vit(), ds.manifest);
  CHECK(j["in_channels"] == 3);
  CHECK(j["out_channels"] == 1);
  CHECK(j["spatial"] == nlohmann::json::array({16}));
  CHECK_THROWS_AS(resolve_model_config({"vit", {{"depth", 3}}}, ds.manifest), ConfigError);
  CHECK_THROWS_AS(resolve_model_config({"mlp", {}}, ds.manifest), ConfigError);
  // Default 12 modes do not fit 16 cells.
  CHECK_THROWS_AS(resolve_model_config({"fno", {}}, ds.manifest), ConfigError);
}

TEST_CASE("fno comparison harness") {
  const auto ds = generate_dataset(System::kAdvection, {{0.5}, {1.0}}, 8, small_grid(), 21);
  CompareOptions o;
  o.vit = tiny_vit();
  o.fno = tiny_fno();
  o.vit_plan = quick_plan(1);
  o.fno_plan = quick_plan(2);
  o.split.id_params = {{0.5}, {1.0}};
  o.split.test_per_param = 1;
  o.split.max_train_val_per_param = 3;  // 2 train + 1 val per parameter
  o.seed = 5;
  const auto c = compare_fno(ds, o);
  REQUIRE(c.rows.size() == 5);
  CHECK(c.rows[0].model == "vit");
  CHECK(c.rows[1].model == "fno-i");
  CHECK(c.rows[2].model == "fno-ii");
  CHECK(c.rows[2].train_trajectories == 4);
  CHECK(c.rows[1].train_trajectories == 2);
  CHECK_FALSE(c.rows[1].ood_mean.has_value());
  CHECK_FALSE(c.rows[2].ood_mean.has_value());
  const auto csv = c.csv();
  CHECK(csv.rfind("model,id_mean,ood_mean\n", 0) == 0);
  CHECK(csv.find("fno-ii,") != std::string::npos);
  CHECK(compare_fno(ds, o).csv() == csv);

  const auto small = generate_dataset(System::kAdvection, {{0.5}, {1.0}}, 5, small_grid(), 21);
  CHECK_THROWS_AS(compare_fno(small, o), DataError);
  o.split.id_params = {{0.5}};
  CHECK_THROWS_AS(compare_fno(ds, o), ConfigError);
}

TEST_CASE("study grids") {
  const auto g = StudyGrid::model_size({"small", "base", "large"});
  CHECK(g.points[0].layers == 2);
  CHECK(g.points[0].hidden == 128);
  CHECK(g.points[2].layers == 8);
  CHECK(g.points[2].hidden == 512);
  CHECK_THROWS_AS(StudyGrid::model_size({"huge"}), ConfigError);
  CHECK_THROWS_AS(StudyGrid::model_size({"base", "small"}), ConfigError);
  CHECK_THROWS_AS(StudyGrid::data_size({10, 10}), ConfigError);
  CHECK_THROWS_AS(StudyGrid::data_size({}), ConfigError);
  CHECK(parse_axis("data-size") == StudyAxis::kDataSize);
  CHECK_THROWS_AS(parse_axis("width"), ConfigError);
}

TEST_CASE("scaling studies") {
  const auto ds = generate_dataset(System::kAdvection, {{0.5}, {1.0}}, 6, small_grid(), 33);
  StudyOptions o;
  o.model = tiny_vit();
  o.plan = quick_plan(3);
  o.split.id_params = {{0.5}, {1.0}};
  o.split.test_per_param = 1;
  o.seed = 2;
  const auto dir = std::filesystem::temp_directory_path() / "pdet_study_test";
  std::filesystem::create_directories(dir);

  SUBCASE("data size") {
    const auto r = scaling_study(ds, StudyGrid::data_size({2, 4}), o);
    REQUIRE(r.rows.size() == 2);
    CHECK(r.rows[0].train_trajectories == 4);
    CHECK(r.rows[1].train_trajectories == 8);
    CHECK(r.rows[0].x == 2.0);
    CHECK(r.plot_json()["x_scale"] == "log");
  }

  SUBCASE("model size reports exact parameter counts") {
    const auto r = scaling_study(ds, StudyGrid::model_size({"L1H8", "L1H16"}), o);
    for (std::size_t i = 0; i < 2; ++i) {
      auto cfg = ViTConfig::from_json(resolve_model_config(o.model, ds.manifest));
      cfg.layers = 1;
      cfg.hidden = i ? 16 : 8;
      CHECK(r.rows[i].param_count == count_params(cfg));
      CHECK(r.rows[i].x == static_cast<double>(count_params(cfg)));
    }
  }

  SUBCASE("per-parameter fno") {
    o.model = tiny_fno();
    o.per_parameter = true;
    const auto r = scaling_study(ds, StudyGrid::data_size({2}), o);
    CHECK(r.rows[0].id_mean.has_value());
    CHECK_FALSE(r.rows[0].ood_mean.has_value());
  }

  SUBCASE("a failing point keeps earlier rows on disk") {
    o.csv_path = dir / "study.csv";
    CHECK_THROWS_AS(scaling_study(ds, StudyGrid::data_size({2, 40}), o), DataError);
    const auto text = slurp(o.csv_path);
    CHECK(text.rfind(StudyResult::csv_header(), 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 2);
  }
  std::filesystem::remove_all(dir);
}
