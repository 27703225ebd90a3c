#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "topoplan/cost.hpp"
#include "topoplan/netmodel.hpp"
#include "topoplan/solver.hpp"

namespace topoplan {

struct OracleLimits {
  int max_layers = 6;
  int max_devices = 8;  // per pipeline region
  int max_levels = 3;
};

struct OracleResult {
  std::optional<PlacementPlan> best;  // witness; stage offsets are the concrete embedding
  long long leaves = 0;               // complete placements scored
};

// Exhaustive search over sweep points, layer partitions, per-stage options
// and every ordered placement of stage device intervals. Levels come from
// explicit device-group membership. Refuses instances beyond `limits`.
OracleResult brute_force_optimum(const ModelGraph& g, const LevelCostMatrix& m, const SearchSpace& space,
                                 const OracleLimits& limits = {});

// t_batch of `plan` with every edge and collective priced at its concrete level.
double rescore_plan(const PlacementPlan& plan, const ModelGraph& g, const LevelCostMatrix& m);

struct OracleInstance {
  std::uint64_t seed = 0;
  ModelGraph g;
  TopologySpec topology;
  SearchSpace space;
};

// Small random instance: L <= 5, K <= 8, levels <= 3, variants <= 2, with a
// memory budget tight enough to force ZeRO or recomputation about half the
// time. `uniform_network` gives all levels identical costs.
OracleInstance random_instance(std::uint64_t seed, bool uniform_network = false);

struct CheckRow {
  std::uint64_t seed = 0;
  int layers = 0;
  int devices = 0;
  int levels = 0;
  std::optional<double> solver;
  std::optional<double> oracle;
  std::optional<double> flat_rescored;
  std::optional<double> mcmc;
  bool optimal = false;    // solver == oracle, including both infeasible
  bool dominates = false;  // solver <= flat_rescored and <= mcmc
  bool pass() const { return optimal && dominates; }
};

struct CheckOptions {
  int count = 100;
  std::uint64_t seed = 0;
  double perturb = 0.0;  // scales the solver's betas by (1 + perturb); negative control
  bool baselines = true;
  int mcmc_iterations = 5000;
  int mcmc_restarts = 10;
};

std::vector<CheckRow> oracle_check(const CheckOptions& opt);
std::string format_check_table(const std::vector<CheckRow>& rows);

}  // namespace topoplan
