#pragma once

#include <cstdint>
#include <vector>

#include "pdet/io/dataset.hpp"

namespace pdet {

enum class Split : std::uint8_t { kUnused, kTrain, kVal, kTest };

struct SplitPlan {
  std::vector<std::vector<double>> id_params;
  std::vector<std::vector<double>> ood_params;
  double train_fraction = 0.8;  // of what remains after test; val gets the rest
  std::size_t test_per_param = 2;
  // Caps train+val trajectories per id parameter (0 = no cap). Used by the
  // data-size studies so every point draws from the same shuffled prefix.
  std::size_t max_train_val_per_param = 0;

  void validate() const;
};

struct SplitAssignment {
  std::vector<Split> of;  // indexed like manifest.trajectories

  std::vector<std::size_t> indices(Split s) const;
  std::size_t count(Split s) const;
};

// Deterministic given (seed, plan) and independent of manifest order: each
// parameter group is ordered by trajectory seed before the seeded shuffle.
SplitAssignment make_splits(const DatasetManifest& manifest, const SplitPlan& plan,
                            std::uint64_t seed);

// Every distinct parameter vector in manifest order of first appearance.
std::vector<std::vector<double>> distinct_params(const DatasetManifest& manifest);

// True when p matches one of the plan's ood parameter vectors.
bool is_ood(const SplitPlan& plan, const std::vector<double>& p);

}  // namespace pdet
