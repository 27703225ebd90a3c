#include "topoplan/memmodel.hpp"

#include <algorithm>

#include "topoplan/error.hpp"

namespace topoplan {

const char* to_string(ZeroStage z) {
  switch (z) {
    case ZeroStage::None: return "none";
    case ZeroStage::Zero1: return "zero1";
    case ZeroStage::Zero2: return "zero2";
    case ZeroStage::Zero3: return "zero3";
  }
  return "?";
}

MemoryBreakdown stage_memory(const StageProfile& sp, int stage_pos, Schedule schedule, bool recompute,
                             const ZeroConfig& zero, int micro_batches) {
  if (stage_pos < 1) fail(ErrorKind::InvalidArgument, "stage position must be >= 1");
  if (micro_batches < 1) fail(ErrorKind::InvalidArgument, "microbatch count must be >= 1");
  const double deg = zero.degree;
  const double w = sp.sharded_weight_bytes;

  MemoryBreakdown mb;
  mb.weights_term = (zero.stage >= ZeroStage::Zero3 ? w / deg : w) +
                    (zero.stage >= ZeroStage::Zero2 ? w / deg : w);
  mb.opt_states =
      zero.stage >= ZeroStage::Zero1 ? sp.optimizer_state_bytes / deg : sp.optimizer_state_bytes;
  mb.activations = sp.activation_bytes;
  mb.stashed_per_microbatch =
      recompute ? std::min(sp.input_activation_bytes, sp.activation_bytes) : sp.activation_bytes;
  mb.stashed_count = schedule == Schedule::OneFOneB ? stage_pos - 1 : micro_batches;
  mb.peak = mb.weights_term + mb.opt_states + mb.activations +
            mb.stashed_count * mb.stashed_per_microbatch;
  return mb;
}

double recompute_latency_penalty(const StageProfile& sp) { return sp.fwd_latency; }

std::optional<Escalation> escalate_zero(const StageProfile& sp, const MemoryPolicy& policy, int stage_pos,
                                        Schedule schedule, int micro_batches, int degree,
                                        bool recompute) {
  if (policy.ignore_memory) {
    Escalation e;
    e.recompute = recompute;
    e.memory = stage_memory(sp, stage_pos, schedule, recompute, {}, micro_batches);
    return e;
  }
  const bool zero_ok = policy.allow_zero && degree >= 2;
  const ZeroStage stages[] = {ZeroStage::None, ZeroStage::Zero1, ZeroStage::Zero2, ZeroStage::Zero3};

  auto attempt = [&](ZeroStage z, bool rc) -> std::optional<Escalation> {
    if (z != ZeroStage::None && !zero_ok) return std::nullopt;
    ZeroConfig cfg{z, z == ZeroStage::None ? 1 : degree};
    MemoryBreakdown mem = stage_memory(sp, stage_pos, schedule, rc, cfg, micro_batches);
    if (mem.peak > policy.budget_bytes) return std::nullopt;
    return Escalation{cfg, rc, mem};
  };

  if (policy.order == EscalationOrder::ZeroFirst) {
    for (bool rc : {recompute, true}) {
      for (ZeroStage z : stages) {
        if (auto e = attempt(z, rc)) return e;
      }
      if (rc) break;
    }
  } else {
    for (ZeroStage z : stages) {
      for (bool rc : {recompute, true}) {
        if (auto e = attempt(z, rc)) return e;
        if (rc) break;
      }
    }
  }
  return std::nullopt;
}

double zero_overhead(const ZeroConfig& zero, const StageProfile& sp, const LevelCostMatrix& m, int level,
                     double micro_batches) {
  if (zero.stage == ZeroStage::None) return 0.0;
  const int n = zero.degree;
  const double opt = sp.optimizer_state_bytes;
  const double w = sp.sharded_weight_bytes;
  double t = m.collective_time(CollectiveKind::ReduceScatter, n, opt, level) +
             m.collective_time(CollectiveKind::AllGather, n, opt, level);
  if (zero.stage == ZeroStage::Zero2) {
    t += m.collective_time(CollectiveKind::ReduceScatter, n, w, level);
  } else if (zero.stage == ZeroStage::Zero3) {
    t += 2.0 * micro_batches * m.collective_time(CollectiveKind::AllGather, n, w, level);
  }
  return t;
}

}  // namespace topoplan
