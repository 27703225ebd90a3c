#pragma once

#include <optional>
#include <string>
#include <vector>

#include "topoplan/baselines.hpp"
#include "topoplan/cost.hpp"
#include "topoplan/solver.hpp"

namespace topoplan {

// Shortest decimal text that reads back to the same double.
std::string format_number(double v);

// "{p, d, t, s, (e,c)}" where s is the sequence-parallel width.
std::string strategy_tuple(const PlacementPlan& plan);

std::string plan_to_json(const PlanResult& result);
std::string plan_to_json(const PlacementPlan& plan);

// Accepts either a full plan document or a bare plan object.
PlacementPlan plan_from_json(const std::string& text);

// One row per sweep point.
std::string report_csv(const PlanResult& result);

struct RunConfig {
  SearchSpace space;
  std::vector<std::string> algorithms{"nest", "flat_dp", "mcmc", "manual"};
  std::optional<ManualStrategy> manual;
  McmcParams mcmc;
};

struct ComparisonRow {
  std::string algorithm;
  int micro_batch_size = 0;
  int d = 0;
  std::optional<PlacementPlan> plan;
  std::string status;  // "ok" or the reason the row has no usable plan
};

struct AlgorithmSummary {
  std::string algorithm;
  std::optional<PlacementPlan> best;  // absent when the algorithm failed
  std::string status;
};

struct Comparison {
  std::vector<ComparisonRow> rows;
  std::vector<AlgorithmSummary> summary;
};

Comparison run_compare(const ModelGraph& g, const LevelCostMatrix& m, const RunConfig& cfg);
std::string comparison_csv(const Comparison& c);
// algorithm, throughput and improvement over the manual baseline.
std::string plot_csv(const Comparison& c);

}  // namespace topoplan
