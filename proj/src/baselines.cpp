#include "topoplan/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "topoplan/error.hpp"

namespace topoplan {

FlatResult flat_dp(const ModelGraph& g, const LevelCostMatrix& topology, const SearchSpace& space) {
  const LevelCostMatrix flat = topology.flattened();
  FlatResult out;
  out.flat = plan_with_pricing(g, topology, flat, space);
  std::map<int, ModelGraph> scaled;
  for (const auto& rec : out.flat.log) {
    if (!rec.best) {
      out.rescored_per_point.emplace_back();
      continue;
    }
    auto it = scaled.find(rec.point.micro_batch_size);
    if (it == scaled.end()) {
      it = scaled.emplace(rec.point.micro_batch_size, rescale_microbatch(g, rec.point.micro_batch_size)).first;
    }
    PlacementPlan p = *rec.best;
    tight_pack(p);
    evaluate_plan(p, it->second, topology);
    out.rescored_per_point.push_back(p);
  }
  if (out.flat.best) {
    PlacementPlan p = *out.flat.best;
    tight_pack(p);
    evaluate_plan(p, rescale_microbatch(g, p.micro_batch_size), topology);
    out.rescored = p;
  }
  return out;
}

namespace {

struct McmcStage {
  int last = 0;  // exclusive end layer
  int variant = 0;
  int replicas = 0;  // index into the replica list
  bool recompute = false;
};

struct McmcState {
  int point = 0;  // index into the searchable sweep points
  std::vector<McmcStage> stages;
};

class Chain {
 public:
  Chain(const ModelGraph& g, const LevelCostMatrix& m, const SearchSpace& space)
      : g_(g), m_(m), space_(space) {
    for (const auto& pt : sweep_points(g, m, space)) {
      if (pt.reason == Infeasibility::None) points_.push_back(pt);
    }
    variants_ = variant_shapes(g);
    std::set<int> reps(space.stage_replicas.begin(), space.stage_replicas.end());
    if (reps.empty()) reps.insert(1);
    replicas_.assign(reps.begin(), reps.end());
    for (const auto& pt : points_) {
      if (!scaled_.count(pt.micro_batch_size)) {
        scaled_.emplace(pt.micro_batch_size, rescale_microbatch(g, pt.micro_batch_size));
      }
    }
  }

  bool empty() const { return points_.empty() || variants_.empty() || g_.num_layers() == 0; }

  std::optional<PlacementPlan> score(const McmcState& st) const {
    const SweepPoint& pt = points_[st.point];
    const ModelGraph& g = scaled_.at(pt.micro_batch_size);
    const int p = static_cast<int>(st.stages.size());
    if (p > space_.max_stages || p > pt.devices_per_pipeline) return std::nullopt;
    PlacementPlan plan;
    plan.d = pt.d;
    plan.micro_batch_size = pt.micro_batch_size;
    plan.micro_batches = pt.micro_batches;
    plan.devices_per_pipeline = pt.devices_per_pipeline;
    int first = 0;
    int used = 0;
    for (int q = 0; q < p; ++q) {
      const auto& s = st.stages[q];
      const ParallelVariant& v = variants_[s.variant];
      for (int i = first; i < s.last; ++i) {
        if (g.layers[i].find(v) == nullptr) return std::nullopt;
      }
      const int r = replicas_[s.replicas];
      used += r * v.devices_per_replica();
      if (used > pt.devices_per_pipeline) return std::nullopt;
      const StageProfile sp = stage_aggregate(g, first, s.last, v);
      auto esc = escalate_zero(sp, space_.memory, p - q, g.schedule, pt.micro_batches, r, s.recompute);
      if (!esc) return std::nullopt;
      PlanStage ps;
      ps.first = first;
      ps.last = s.last;
      ps.choice = {v, r, esc->zero, esc->recompute};
      plan.stages.push_back(ps);
      first = s.last;
    }
    tight_pack(plan);
    evaluate_plan(plan, g, m_);
    return plan;
  }

  McmcState random_state(std::mt19937_64& rng) const {
    McmcState st;
    st.point = uniform(rng, 0, static_cast<int>(points_.size()) - 1);
    const int L = g_.num_layers();
    const int cap = std::max(1, std::min({L, space_.max_stages, points_[st.point].devices_per_pipeline}));
    const int p = uniform(rng, 1, cap);
    const int variant = uniform(rng, 0, static_cast<int>(variants_.size()) - 1);
    const bool rc = uniform(rng, 0, 1) == 1;
    int first = 0;
    for (int q = 0; q < p; ++q) {
      const int size = L / p + (q < L % p ? 1 : 0);
      first += size;
      st.stages.push_back({first, variant, 0, rc});
    }
    return st;
  }

  McmcState propose(const McmcState& cur, std::mt19937_64& rng) const {
    McmcState st = cur;
    const int p = static_cast<int>(st.stages.size());
    const int q = uniform(rng, 0, p - 1);
    auto stage_first = [&](int k) { return k == 0 ? 0 : st.stages[k - 1].last; };
    switch (uniform(rng, 0, 7)) {
      case 0: {  // shift a boundary
        if (p < 2) break;
        const int b = uniform(rng, 0, p - 2);
        const int delta = uniform(rng, 0, 1) == 0 ? -1 : 1;
        const int nb = st.stages[b].last + delta;
        if (nb > stage_first(b) && nb < st.stages[b + 1].last) st.stages[b].last = nb;
        break;
      }
      case 1: {  // split a stage
        const int f = stage_first(q);
        const int n = st.stages[q].last - f;
        if (n < 2) break;
        McmcStage left = st.stages[q];
        left.last = f + uniform(rng, 1, n - 1);
        st.stages.insert(st.stages.begin() + q, left);
        break;
      }
      case 2: {  // merge with the next stage
        if (q + 1 >= p) break;
        st.stages[q].last = st.stages[q + 1].last;
        st.stages.erase(st.stages.begin() + q + 1);
        break;
      }
      case 3:
        st.stages[q].variant = uniform(rng, 0, static_cast<int>(variants_.size()) - 1);
        break;
      case 4:
        st.stages[q].replicas = uniform(rng, 0, static_cast<int>(replicas_.size()) - 1);
        break;
      case 5:
        st.stages[q].recompute = !st.stages[q].recompute;
        break;
      case 6:    // change d
      case 7: {  // change microbatch size
        const bool change_d = uniform(rng, 0, 1) == 0;
        const SweepPoint& cp = points_[st.point];
        std::vector<int> pool;
        for (int k = 0; k < static_cast<int>(points_.size()); ++k) {
          const bool same_mbs = points_[k].micro_batch_size == cp.micro_batch_size;
          const bool same_d = points_[k].d == cp.d;
          if (change_d ? (same_mbs && !same_d) : (same_d && !same_mbs)) pool.push_back(k);
        }
        if (!pool.empty()) st.point = pool[uniform(rng, 0, static_cast<int>(pool.size()) - 1)];
        break;
      }
    }
    return st;
  }

 private:
  static int uniform(std::mt19937_64& rng, int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  }

  const ModelGraph& g_;
  const LevelCostMatrix& m_;
  const SearchSpace& space_;
  std::vector<SweepPoint> points_;
  std::vector<ParallelVariant> variants_;
  std::vector<int> replicas_;
  std::map<int, ModelGraph> scaled_;
};

}  // namespace

McmcResult mcmc_search(const ModelGraph& g, const LevelCostMatrix& m, const SearchSpace& space,
                       const McmcParams& params) {
  if (params.iterations < 1 || params.restarts < 1) {
    fail(ErrorKind::InvalidArgument, "mcmc: iterations and restarts must be >= 1");
  }
  if (!(params.initial_temperature > 0.0) || !(params.cooling > 0.0 && params.cooling <= 1.0)) {
    fail(ErrorKind::InvalidArgument, "mcmc: temperature must be > 0 and cooling in (0, 1]");
  }
  g.validate();
  McmcResult result;
  Chain chain(g, m, space);
  if (chain.empty()) return result;

  for (int restart = 0; restart < params.restarts; ++restart) {
    std::mt19937_64 rng(params.seed + static_cast<std::uint64_t>(restart));
    McmcState cur;
    std::optional<PlacementPlan> cur_plan;
    // Random starts until one is feasible; the budget is the chain length.
    for (int attempt = 0; attempt < params.iterations && !cur_plan; ++attempt) {
      cur = chain.random_state(rng);
      cur_plan = chain.score(cur);
      ++result.proposals;
    }
    if (!cur_plan) continue;
    if (!result.best || better_plan(*cur_plan, *result.best)) result.best = cur_plan;
    double temperature = params.initial_temperature * cur_plan->t_batch;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int it = 0; it < params.iterations; ++it) {
      McmcState next = chain.propose(cur, rng);
      auto next_plan = chain.score(next);
      ++result.proposals;
      const double u = unit(rng);
      if (next_plan) {
        const double delta = next_plan->t_batch - cur_plan->t_batch;
        if (delta <= 0.0 || (temperature > 0.0 && u < std::exp(-delta / temperature))) {
          cur = std::move(next);
          cur_plan = std::move(next_plan);
          ++result.accepted;
          if (better_plan(*cur_plan, *result.best)) result.best = cur_plan;
        }
      }
      temperature *= params.cooling;
    }
  }
  return result;
}

ManualResult eval_manual(const ModelGraph& g, const LevelCostMatrix& m, const SearchSpace& space,
                         const ManualStrategy& s) {
  g.validate();
  if (s.p < 1 || s.d < 1 || s.t < 1 || s.e < 1 || s.c < 1) {
    fail(ErrorKind::InvalidArgument, "manual strategy: p, d, t, e, c must be >= 1");
  }
  if (s.p > g.num_layers()) {
    fail(ErrorKind::InvalidArgument, "manual strategy: p=" + std::to_string(s.p) + " exceeds " +
                                         std::to_string(g.num_layers()) + " layers");
  }
  const int total = space.total_devices > 0 ? std::min(space.total_devices, m.total_devices()) : m.total_devices();
  const long long need = static_cast<long long>(s.p) * s.d * s.t * s.e * s.c;
  if (need > total) {
    fail(ErrorKind::InvalidArgument, "manual strategy needs " + std::to_string(need) + " devices but only " +
                                         std::to_string(total) + " are available");
  }
  const int mbs = s.micro_batch_size > 0 ? s.micro_batch_size : g.micro_batch_size;
  if (g.global_batch % (static_cast<long long>(mbs) * s.d) != 0) {
    fail(ErrorKind::InvalidArgument, "manual strategy: global batch not divisible by microbatch size x d");
  }
  const int K = total / s.d;
  if (!replica_regions_aligned(m, K)) {
    fail(ErrorKind::InvalidArgument, "manual strategy: d=" + std::to_string(s.d) +
                                         " splits the topology into misaligned regions");
  }
  const ParallelVariant v{s.t, s.e, s.c, s.sequence_parallel};
  for (const auto& layer : g.layers) {
    if (layer.find(v) == nullptr) {
      fail(ErrorKind::InvalidArgument, "manual strategy: layer id " + std::to_string(layer.id) +
                                           " does not offer variant " + to_string(v));
    }
  }
  const ModelGraph gm = rescale_microbatch(g, mbs);
  ManualResult out;
  PlacementPlan& plan = out.plan;
  plan.d = s.d;
  plan.micro_batch_size = mbs;
  plan.micro_batches = g.global_batch / (mbs * s.d);
  plan.devices_per_pipeline = K;
  const int L = g.num_layers();
  int first = 0;
  for (int q = 0; q < s.p; ++q) {
    PlanStage st;
    st.first = first;
    st.last = first + L / s.p + (q < L % s.p ? 1 : 0);
    st.choice = {v, 1, {}, s.recompute};
    first = st.last;
    plan.stages.push_back(st);
  }
  tight_pack(plan);
  evaluate_plan(plan, gm, m);
  if (!space.memory.ignore_memory) {
    for (const auto& st : plan.stages) {
      if (st.memory.peak > space.memory.budget_bytes) out.memory_feasible = false;
    }
  }
  return out;
}

}  // namespace topoplan
