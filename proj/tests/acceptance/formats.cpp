#include <filesystem>
#include <fstream>
#include <iterator>

#include "common.hpp"
#include "pdet/core/rng.hpp"
#include "pdet/datagen/datagen.hpp"
#include "pdet/io/splits.hpp"
#include "pdet/model/checkpoint.hpp"
#include "pdet/model/fno.hpp"
#include "pdet/model/vit.hpp"
#include "pdet/train/train.hpp"

namespace acceptance {

using namespace pdet;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

Dataset merge(std::vector<Dataset> parts) {
  Dataset out;
  const System sys = parts.at(0).manifest.system;
  const GridSpec grid = parts.at(0).manifest.grid;
  for (auto& p : parts) {
    for (auto& t : p.trajectories) out.trajectories.push_back(std::move(t));
  }
  out.manifest = make_manifest(sys, grid, out.trajectories);
  return out;
}

Outcome formats_and_determinism() {
  const auto dir = std::filesystem::temp_directory_path() / "pdet_acceptance_formats";
  std::filesystem::create_directories(dir);
  std::vector<std::string> failures;

  // PDET: write, read, write again.
  GridSpec g;
  g.spatial_extents = {64};
  g.n_timesteps = 21;
  std::vector<Dataset> parts;
  parts.push_back(generate_dataset(System::kAdvection, {{0.1}, {0.4}}, 3, g, 5));
  parts.push_back(generate_dataset(System::kAdvection, {{2.0}}, 3, g, 7));
  const auto ds = merge(std::move(parts));
  write_dataset(dir / "a.pdet", ds);
  const auto back = read_dataset(dir / "a.pdet");
  write_dataset(dir / "b.pdet", back);
  const bool pdet_ok = slurp(dir / "a.pdet") == slurp(dir / "b.pdet") &&
                       slurp(dir / "a.pdet") == serialize_dataset(ds);
  if (!pdet_ok) failures.push_back("PDET round trip");

  // Checkpoints of both architectures.
  std::vector<const Trajectory*> tr;
  for (const auto& t : back.trajectories) tr.push_back(&t);
  const auto stats = compute_norm_stats(tr);
  bool ck_ok = true;
  ViTConfig vc;
  vc.spatial = {64};
  vc.patch = {8, 1};
  vc.context = 4;
  vc.hidden = 16;
  vc.layers = 1;
  vc.heads = 2;
  FNOConfig fc;
  fc.spatial = {64};
  fc.context = 4;
  fc.modes = 8;
  fc.width = 6;
  fc.layers = 2;
  fc.projection = 16;
  const std::unique_ptr<Model> models[] = {make_model("vit", vc.to_json(), 1),
                                           make_model("fno", fc.to_json(), 2)};
  for (const auto& m : models) {
    Provenance prov;
    prov.dataset_hash = file_hash(dir / "a.pdet");
    prov.seed = 9;
    save_checkpoint(dir / "m.pdtc", *m, stats, prov);
    const auto loaded = load_checkpoint(dir / "m.pdtc");
    save_checkpoint(dir / "m2.pdtc", *loaded.model, loaded.norm, loaded.provenance);
    ck_ok = ck_ok && slurp(dir / "m.pdtc") == slurp(dir / "m2.pdtc");
  }
  if (!ck_ok) failures.push_back("checkpoint round trip");

  // Fixed-seed training twice, single-threaded: logs and weights identical.
  auto run = [&](std::size_t threads) {
    ViT m(vc);
    m.init(derive_seed(11, "init", 0));
    TrainPlan p;
    p.max_epochs = 3;
    p.batch_size = 8;
    p.seed = 11;
    p.threads = threads;
    const WindowSet ws(tr, 4, stats);
    const WindowSet none({}, 4, stats);
    const auto r = train(m, ws, none, p);
    return format_train_log(r.log) + serialize_checkpoint(m, stats, {});
  };
  const bool train_ok = run(1) == run(1) && run(3) == run(3);
  if (!train_ok) failures.push_back("training log reproduction");

  // Split assignment under every rotation of the manifest order.
  SplitPlan plan;
  plan.id_params = {{0.1}, {0.4}};
  plan.ood_params = {{2.0}};
  plan.test_per_param = 1;
  const auto ref = make_splits(back.manifest, plan, 3);
  bool split_ok = true;
  const std::size_t n = back.manifest.trajectories.size();
  for (std::size_t rot = 1; rot < n; ++rot) {
    auto m = back.manifest;
    std::rotate(m.trajectories.begin(), m.trajectories.begin() + static_cast<std::ptrdiff_t>(rot),
                m.trajectories.end());
    const auto s = make_splits(m, plan, 3);
    for (std::size_t i = 0; i < n; ++i) split_ok = split_ok && s.of[i] == ref.of[(i + rot) % n];
  }
  if (!split_ok) failures.push_back("split order invariance");
  std::filesystem::remove_all(dir);

  std::string detail = "PDET and checkpoint round trips byte-identical, training logs bit-exact, "
                       "splits order-invariant";
  if (!failures.empty()) {
    detail = "failed:";
    for (const auto& f : failures) detail += " " + f + ";";
  }
  return {failures.empty(), detail};
}

}  // namespace acceptance
