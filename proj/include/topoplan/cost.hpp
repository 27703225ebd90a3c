#pragma once

#include <vector>

#include "topoplan/graph.hpp"
#include "topoplan/memmodel.hpp"
#include "topoplan/netmodel.hpp"

// Cost arithmetic shared by the solver, the baselines and the oracle. Every
// search path prices a placement through these functions so that equal
// placements produce bit-identical numbers.
namespace topoplan {

// What a search may pick for one stage; ZeRO and the final recompute flag
// come out of memory escalation.
struct StageOption {
  ParallelVariant variant;
  int replicas = 1;
  bool recompute = false;  // starting point for escalation

  int devices() const { return replicas * variant.devices_per_replica(); }
};

struct StageChoice {
  ParallelVariant variant;
  int replicas = 1;
  ZeroConfig zero;
  bool recompute = false;

  int devices() const { return replicas * variant.devices_per_replica(); }
};

// Per-microbatch stage time without boundary transfers. Intra-stage
// collectives, replica gradient sync and ZeRO traffic are priced at the
// level spanned by the stage's devices.
double stage_core_latency(const StageProfile& sp, const StageChoice& c, const LevelCostMatrix& m,
                          int span_level, int micro_batches);

// Boundary transfer share per microbatch; level < 0 means no edge.
double edge_latency(const LevelCostMatrix& m, int level, double bytes, int replicas);

inline double stage_latency(double core, double in_edge, double out_edge) {
  return core + in_edge + out_edge;
}

// Gradient AllReduce across data-parallel pipeline replicas.
double sync_cost(const ModelGraph& g, const LevelCostMatrix& m, int d, int devices_per_pipeline);

double batch_time(double t_stage, int micro_batches, int stages, double sync);

struct PlanStage {
  int first = 0;
  int last = 0;
  int first_device = 0;  // offset inside the pipeline's device region
  StageChoice choice;
  int span_level = 0;
  int in_level = -1;  // -1: no inbound edge
  int out_level = -1;
  double latency = 0.0;
  MemoryBreakdown memory;

  int devices() const { return choice.devices(); }
};

struct PlacementPlan {
  std::vector<PlanStage> stages;
  int d = 1;
  int micro_batch_size = 1;
  int micro_batches = 1;
  int devices_per_pipeline = 1;  // K, the size of each replica's device region
  double t_stage = 0.0;
  double sync = 0.0;
  double t_batch = 0.0;
  double throughput = 0.0;

  int p() const { return static_cast<int>(stages.size()); }
  int pipeline_devices() const;
  double peak_memory() const;
};

// Places stages back to back from offset 0.
void tight_pack(PlacementPlan& plan);

// Checks tiling, device offsets and variant availability; throws on violation.
void validate_plan(const PlacementPlan& plan, const ModelGraph& g);

// Recomputes levels, latencies, memory and batch totals from the stage ranges,
// choices and device offsets. `g` must already be at the plan's microbatch size.
void evaluate_plan(PlacementPlan& plan, const ModelGraph& g, const LevelCostMatrix& m);

// Data-parallel degree d splits `total` devices into regions of K = total / d;
// usable only when every level's groups tile those regions identically.
bool replica_regions_aligned(const LevelCostMatrix& m, int devices_per_pipeline);

}  // namespace topoplan
