#include "pdet/io/splits.hpp"

#include <algorithm>
#include <cmath>

#include "pdet/core/error.hpp"
#include "pdet/core/rng.hpp"

namespace pdet {
namespace {

bool contains(const std::vector<std::vector<double>>& set, const std::vector<double>& p) {
  return std::any_of(set.begin(), set.end(),
                     [&](const auto& q) { return same_params(q, p); });
}

std::vector<std::size_t> group_of(const DatasetManifest& m, const std::vector<double>& p) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < m.trajectories.size(); ++i) {
    if (same_params(m.trajectories[i].params, p)) idx.push_back(i);
  }
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return m.trajectories[a].seed < m.trajectories[b].seed;
  });
  return idx;
}

}  // namespace

void SplitPlan::validate() const {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train fraction must lie in (0, 1)");
  }
  for (const auto& p : id_params) {
    if (contains(ood_params, p)) {
      throw ConfigError("parameter " + params_to_string(p) + " is both id and ood");
    }
  }
}

std::vector<std::size_t> SplitAssignment::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < of.size(); ++i) {
    if (of[i] == s) out.push_back(i);
  }
  return out;
}

std::size_t SplitAssignment::count(Split s) const {
  return static_cast<std::size_t>(std::count(of.begin(), of.end(), s));
}

std::vector<std::vector<double>> distinct_params(const DatasetManifest& manifest) {
  std::vector<std::vector<double>> out;
  for (const auto& r : manifest.trajectories) {
    if (!contains(out, r.params)) out.push_back(r.params);
  }
  return out;
}

bool is_ood(const SplitPlan& plan, const std::vector<double>& p) {
  return contains(plan.ood_params, p);
}

SplitAssignment make_splits(const DatasetManifest& manifest, const SplitPlan& plan,
                            std::uint64_t seed) {
  plan.validate();
  SplitAssignment out;
  out.of.assign(manifest.trajectories.size(), Split::kUnused);

  for (const auto& p : plan.id_params) {
    auto idx = group_of(manifest, p);
    if (idx.empty()) {
      throw DataError("split plan references parameter " + params_to_string(p) +
                      " absent from the dataset");
    }
    if (idx.size() < plan.test_per_param) {
      throw DataError("parameter " + params_to_string(p) + " has " +
                      std::to_string(idx.size()) + " trajectories, " +
                      std::to_string(plan.test_per_param) + " needed for test");
    }
    Rng rng(derive_seed(seed, "split", fnv1a(params_to_string(p))));
    rng.shuffle(idx.begin(), idx.end());
    std::size_t rest = idx.size() - plan.test_per_param;
    if (plan.max_train_val_per_param > 0) rest = std::min(rest, plan.max_train_val_per_param);
    const auto n_train = static_cast<std::size_t>(
        std::floor(plan.train_fraction * static_cast<double>(rest) + 1e-9));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      Split s = Split::kUnused;
      if (i < plan.test_per_param) {
        s = Split::kTest;
      } else if (i < plan.test_per_param + n_train) {
        s = Split::kTrain;
      } else if (i < plan.test_per_param + rest) {
        s = Split::kVal;
      }
      out.of[idx[i]] = s;
    }
  }
  for (const auto& p : plan.ood_params) {
    const auto idx = group_of(manifest, p);
    if (idx.empty()) {
      throw DataError("split plan references ood parameter " + params_to_string(p) +
                      " absent from the dataset");
    }
    for (auto i : idx) out.of[i] = Split::kTest;
  }
  return out;
}

}  // namespace pdet
