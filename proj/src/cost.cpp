#include "topoplan/cost.hpp"

#include <algorithm>

#include "topoplan/error.hpp"

namespace topoplan {

double stage_core_latency(const StageProfile& sp, const StageChoice& c, const LevelCostMatrix& m,
                          int span_level, int micro_batches) {
  const int tec = c.variant.devices_per_replica();
  const double r = c.replicas;
  double compute = sp.fwd_latency + sp.bwd_latency;
  if (c.recompute) compute += recompute_latency_penalty(sp);
  double collectives = 0.0;
  for (std::size_t k = 0; k < kNumCollectiveKinds; ++k) {
    if (sp.collective_bytes[k] > 0.0) {
      collectives += m.collective_time(static_cast<CollectiveKind>(k), tec, sp.collective_bytes[k], span_level);
    }
  }
  double per_batch = 0.0;
  if (c.replicas > 1) {
    per_batch += m.collective_time(CollectiveKind::AllReduce, c.replicas, sp.sharded_weight_bytes, span_level);
  }
  per_batch += zero_overhead(c.zero, sp, m, span_level, micro_batches / r);
  return (compute + collectives) / r + per_batch / micro_batches;
}

double edge_latency(const LevelCostMatrix& m, int level, double bytes, int replicas) {
  if (level < 0) return 0.0;
  return m.p2p_time(level, bytes) / replicas;
}

double sync_cost(const ModelGraph& g, const LevelCostMatrix& m, int d, int devices_per_pipeline) {
  if (d <= 1) return 0.0;
  const int level = m.tightest_level(d * devices_per_pipeline);
  return m.collective_time(CollectiveKind::AllReduce, d, g.total_weight_bytes(), level);
}

double batch_time(double t_stage, int micro_batches, int stages, double sync) {
  return t_stage * static_cast<double>(micro_batches + stages - 1) + sync;
}

int PlacementPlan::pipeline_devices() const {
  int n = 0;
  for (const auto& s : stages) n += s.devices();
  return n;
}

double PlacementPlan::peak_memory() const {
  double peak = 0.0;
  for (const auto& s : stages) peak = std::max(peak, s.memory.peak);
  return peak;
}

void tight_pack(PlacementPlan& plan) {
  int offset = 0;
  for (auto& s : plan.stages) {
    s.first_device = offset;
    offset += s.devices();
  }
}

void validate_plan(const PlacementPlan& plan, const ModelGraph& g) {
  if (plan.stages.empty()) fail(ErrorKind::InvalidArgument, "plan has no stages");
  if (plan.d < 1 || plan.micro_batches < 1 || plan.micro_batch_size < 1 || plan.devices_per_pipeline < 1) {
    fail(ErrorKind::InvalidArgument, "plan has non-positive d, microbatch size, microbatch count or K");
  }
  int expect_first = 0;
  int min_offset = 0;
  for (std::size_t q = 0; q < plan.stages.size(); ++q) {
    const auto& s = plan.stages[q];
    const std::string ctx = "stage " + std::to_string(q);
    if (s.first != expect_first || s.last <= s.first) {
      fail(ErrorKind::InvalidArgument, ctx + ": layer ranges must tile the chain in order");
    }
    if (s.choice.replicas < 1) fail(ErrorKind::InvalidArgument, ctx + ": replicas must be >= 1");
    if (s.first_device < min_offset) {
      fail(ErrorKind::InvalidArgument, ctx + ": device interval overlaps or precedes the previous stage");
    }
    if (s.first_device + s.devices() > plan.devices_per_pipeline) {
      fail(ErrorKind::InvalidArgument, ctx + ": device interval exceeds the pipeline region");
    }
    for (int i = s.first; i < s.last; ++i) {
      if (g.layers.at(i).find(s.choice.variant) == nullptr) {
        fail(ErrorKind::InvalidArgument, ctx + ": layer " + std::to_string(i) + " does not offer variant " +
                                             to_string(s.choice.variant));
      }
    }
    if (s.choice.zero.stage != ZeroStage::None && s.choice.zero.degree != s.choice.replicas) {
      fail(ErrorKind::InvalidArgument, ctx + ": ZeRO degree must equal the stage replica count");
    }
    expect_first = s.last;
    min_offset = s.first_device + s.devices();
  }
  if (expect_first != g.num_layers()) fail(ErrorKind::InvalidArgument, "plan does not cover every layer");
}

void evaluate_plan(PlacementPlan& plan, const ModelGraph& g, const LevelCostMatrix& m) {
  validate_plan(plan, g);
  const int p = plan.p();
  std::vector<StageProfile> profiles;
  profiles.reserve(p);
  for (const auto& s : plan.stages) profiles.push_back(stage_aggregate(g, s.first, s.last, s.choice.variant));

  for (int q = 0; q < p; ++q) {
    auto& s = plan.stages[q];
    s.span_level = m.span_level(s.first_device, s.devices());
    s.in_level = -1;
    s.out_level = -1;
    if (q > 0) {
      const auto& prev = plan.stages[q - 1];
      s.in_level = m.span_level(prev.first_device, s.first_device + s.devices() - prev.first_device);
    }
    if (q + 1 < p) {
      const auto& next = plan.stages[q + 1];
      s.out_level = m.span_level(s.first_device, next.first_device + next.devices() - s.first_device);
    }
  }
  double t_stage = 0.0;
  for (int q = 0; q < p; ++q) {
    auto& s = plan.stages[q];
    const auto& sp = profiles[q];
    const double core = stage_core_latency(sp, s.choice, m, s.span_level, plan.micro_batches);
    s.latency = stage_latency(core, edge_latency(m, s.in_level, sp.input_activation_bytes, s.choice.replicas),
                              edge_latency(m, s.out_level, sp.boundary_activation_bytes, s.choice.replicas));
    s.memory = stage_memory(sp, p - q, g.schedule, s.choice.recompute, s.choice.zero, plan.micro_batches);
    t_stage = std::max(t_stage, s.latency);
  }
  plan.t_stage = t_stage;
  plan.sync = sync_cost(g, m, plan.d, plan.devices_per_pipeline);
  plan.t_batch = batch_time(t_stage, plan.micro_batches, p, plan.sync);
  plan.throughput = g.global_batch / plan.t_batch;
}

bool replica_regions_aligned(const LevelCostMatrix& m, int devices_per_pipeline) {
  for (int l = 0; l + 1 < m.num_levels(); ++l) {
    const int c = m.row(l).capacity;
    if (c % devices_per_pipeline != 0 && devices_per_pipeline % c != 0) return false;
  }
  return true;
}

}  // namespace topoplan
