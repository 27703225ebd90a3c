#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "topoplan/cost.hpp"
#include "topoplan/graph.hpp"
#include "topoplan/memmodel.hpp"
#include "topoplan/netmodel.hpp"

namespace topoplan {

struct SearchSpace {
  std::vector<int> micro_batch_sizes;  // empty: the profile's own size
  std::vector<int> replication;        // data-parallel degrees; empty: powers of two
  std::vector<int> stage_replicas{1, 2, 4, 8};
  int max_stages = 16;
  int total_devices = 0;  // 0: every device of the topology
  MemoryPolicy memory;
  int threads = 1;
};

enum class Infeasibility { None, Memory, Devices, Variant, Alignment, Batch };

const char* to_string(Infeasibility r);

struct SweepPoint {
  int micro_batch_size = 1;
  int d = 1;
  int devices_per_pipeline = 0;  // K
  int micro_batches = 0;         // m per pipeline replica
  Infeasibility reason = Infeasibility::None;  // Alignment or Batch when skipped up front
};

// Enumerates (microbatch size, d) in ascending order, marking points that
// cannot be searched.
std::vector<SweepPoint> sweep_points(const ModelGraph& g, const LevelCostMatrix& m, const SearchSpace& space);

// Every (variant, stage replicas, starting recompute) triple the DP may assign.
std::vector<StageOption> stage_options(const ModelGraph& g, const SearchSpace& space);

// dp[level][suffix start][devices from the region end][stages] for one sweep
// point. Stage intervals are ordered inside a region of K devices; a state at
// level l has its first stage inside one level-l group and prices its inbound
// edge at l.
class DPTable {
 public:
  static constexpr int kHead = -1;  // level slot of the first pipeline stage
  static constexpr int kTail = -1;  // consumed level of the last stage

  struct Cell {
    double latency = std::numeric_limits<double>::infinity();
    std::int32_t devices = 0;
    std::int16_t cut = 0;
    std::uint16_t prev_k = 0;
    std::uint16_t option = 0;
    std::int8_t cons_level = kTail;

    bool feasible() const { return latency != std::numeric_limits<double>::infinity(); }
  };

  DPTable(const ModelGraph& g, const LevelCostMatrix& m, int devices_per_pipeline, int max_stages);

  int num_layers() const { return layers_; }
  int num_levels() const { return levels_; }
  int devices() const { return k_; }
  int max_stages() const { return stages_; }

  // level is kHead for start == 0, otherwise in [0, num_levels).
  const Cell& cell(int level, int start, int offset, int stages) const;
  Cell& cell(int level, int start, int offset, int stages);
  bool has_cell(int level, int start, int stages) const;

 private:
  friend class Solver;
  int rows(int stages) const;
  int row(int level, int start) const;

  int layers_, levels_, k_, stages_;
  std::vector<std::vector<Cell>> slices_;  // slices_[s - 1]
};

struct SolveContext {
  const ModelGraph* g = nullptr;  // at the sweep point's microbatch size
  const LevelCostMatrix* m = nullptr;
  std::vector<StageOption> options;
  MemoryPolicy memory;
  int devices_per_pipeline = 1;
  int d = 1;
  int micro_batches = 1;
  int max_stages = 1;
  int threads = 1;
};

struct SolveOutcome {
  DPTable table;
  Infeasibility reason = Infeasibility::None;
};

SolveOutcome solve(const SolveContext& ctx);

struct ClosedCandidate {
  int stages = 0;
  int offset = 0;  // start of the first stage
  double t_stage = 0.0;
  double t_batch = 0.0;
  int devices = 0;
};

// Best head cell per stage count, sorted by t_batch then devices then stages.
std::vector<ClosedCandidate> close_batch_time(const DPTable& table, const SolveContext& ctx);

PlacementPlan reconstruct_plan(const DPTable& table, const SolveContext& ctx, const ClosedCandidate& c);

struct SweepRecord {
  SweepPoint point;
  Infeasibility reason = Infeasibility::None;
  std::optional<PlacementPlan> best;
  std::vector<ClosedCandidate> candidates;
};

struct PlanResult {
  std::optional<PlacementPlan> best;
  std::vector<SweepRecord> log;

  // Structured failure text listing each sweep point's binding constraint.
  std::string failure_summary() const;
};

// Sweeps (microbatch size, d). Sweep points come from `topology`; stage
// pricing uses `pricing`, which differs only for the flat baseline.
PlanResult plan(const ModelGraph& g, const LevelCostMatrix& topology, const SearchSpace& space);
PlanResult plan_with_pricing(const ModelGraph& g, const LevelCostMatrix& topology,
                             const LevelCostMatrix& pricing, const SearchSpace& space);

// Total order used to pick a winner among sweep points.
bool better_plan(const PlacementPlan& a, const PlacementPlan& b);

}  // namespace topoplan
