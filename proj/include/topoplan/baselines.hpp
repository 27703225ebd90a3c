#pragma once

#include <cstdint>
#include <optional>

#include "topoplan/cost.hpp"
#include "topoplan/solver.hpp"

namespace topoplan {

struct FlatResult {
  PlanResult flat;                          // as seen under the uniform assumption
  std::optional<PlacementPlan> rescored;    // best flat plan priced on the real network
  std::vector<std::optional<PlacementPlan>> rescored_per_point;  // parallel to flat.log
};

// Same DP on a single-level network priced at level 0, then embedded back
// onto the real topology by packing stages from device 0.
FlatResult flat_dp(const ModelGraph& g, const LevelCostMatrix& topology, const SearchSpace& space);

struct McmcParams {
  int iterations = 5000;
  int restarts = 10;
  double initial_temperature = 0.1;  // fraction of the first plan's t_batch
  double cooling = 0.995;
  std::uint64_t seed = 0;
};

struct McmcResult {
  std::optional<PlacementPlan> best;
  long long proposals = 0;
  long long accepted = 0;
};

McmcResult mcmc_search(const ModelGraph& g, const LevelCostMatrix& m, const SearchSpace& space,
                       const McmcParams& params);

struct ManualStrategy {
  int p = 1;
  int d = 1;
  int t = 1;
  int e = 1;
  int c = 1;
  bool sequence_parallel = false;
  int micro_batch_size = 0;  // 0: the profile's own
  bool recompute = false;
};

struct ManualResult {
  PlacementPlan plan;
  bool memory_feasible = true;
};

// Equal layer split (remainder to the earliest stages), one replica per stage,
// no automatic ZeRO. Inconsistent tuples throw; memory overflow is flagged.
ManualResult eval_manual(const ModelGraph& g, const LevelCostMatrix& m, const SearchSpace& space,
                         const ManualStrategy& strategy);

}  // namespace topoplan
