#pragma once

#include <optional>

#include "topoplan/graph.hpp"
#include "topoplan/netmodel.hpp"

namespace topoplan {

enum class ZeroStage { None = 0, Zero1 = 1, Zero2 = 2, Zero3 = 3 };

struct ZeroConfig {
  ZeroStage stage = ZeroStage::None;
  int degree = 1;
};

struct MemoryBreakdown {
  double weights_term = 0.0;  // parameters + accumulated gradients
  double opt_states = 0.0;
  double activations = 0.0;
  double stashed_per_microbatch = 0.0;
  int stashed_count = 0;
  double peak = 0.0;
};

// Which knob the escalation reaches for first.
enum class EscalationOrder { ZeroFirst, RecomputeFirst };

struct MemoryPolicy {
  double budget_bytes = 80e9;
  bool ignore_memory = false;  // post-hoc style ablation: everything fits
  bool allow_zero = true;
  EscalationOrder order = EscalationOrder::ZeroFirst;
};

struct Escalation {
  ZeroConfig zero;
  bool recompute = false;
  MemoryBreakdown memory;
};

// stage_pos counts from the pipeline end (last stage is 1).
MemoryBreakdown stage_memory(const StageProfile& sp, int stage_pos, Schedule schedule, bool recompute,
                             const ZeroConfig& zero, int micro_batches);

double recompute_latency_penalty(const StageProfile& sp);

// First configuration in escalation order whose peak fits the budget, or
// nullopt. ZeRO is only considered for degree >= 2.
std::optional<Escalation> escalate_zero(const StageProfile& sp, const MemoryPolicy& policy, int stage_pos,
                                        Schedule schedule, int micro_batches, int degree,
                                        bool recompute);

// Seconds per batch spent on ZeRO collectives among `zero.degree` devices.
double zero_overhead(const ZeroConfig& zero, const StageProfile& sp, const LevelCostMatrix& m, int level,
                     double micro_batches);

const char* to_string(ZeroStage z);

}  // namespace topoplan
