#include "topoplan/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "topoplan/baselines.hpp"
#include "topoplan/error.hpp"

namespace topoplan {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Tightest level at which every listed device shares one group.
int level_of_devices(const LevelCostMatrix& m, const std::vector<int>& devs) {
  for (int l = 0; l < m.num_levels(); ++l) {
    const int cap = m.row(l).capacity;
    bool same = true;
    for (int dev : devs) same = same && dev / cap == devs.front() / cap;
    if (same) return l;
  }
  return m.num_levels() - 1;
}

std::vector<int> device_range(int first, int count) {
  std::vector<int> out(count);
  for (int k = 0; k < count; ++k) out[k] = first + k;
  return out;
}

struct Entry {
  StageChoice choice;
  int devices = 0;
  std::vector<double> core;  // by span level
  std::vector<double> in;    // by inbound edge level
  std::vector<double> out;   // by outbound edge level
};

struct Search {
  explicit Search(const LevelCostMatrix& matrix) : m(matrix) {}

  const LevelCostMatrix& m;
  int K = 0;
  int p = 0;
  int micro_batches = 0;
  double sync = 0.0;
  std::vector<std::vector<Entry>> entries;  // per stage

  std::vector<int> pick, offset, span;
  std::vector<int> best_pick, best_offset;
  double best = kInf;
  long long leaves = 0;

  // Stage q is placed; stage q-1's latency becomes known here.
  void dfs(int q, int cursor, double running_max) {
    if (q == p) {
      const int last = p - 1;
      const Entry& e = entries[last][pick[last]];
      const double in = last == 0 ? 0.0 : e.in[edge_level(last - 1)];
      const double lat = std::max(running_max, stage_latency(e.core[span[last]], in, 0.0));
      const double t = batch_time(lat, micro_batches, p, sync);
      ++leaves;
      if (t < best) {
        best = t;
        best_pick = pick;
        best_offset = offset;
      }
      return;
    }
    for (std::size_t k = 0; k < entries[q].size(); ++k) {
      const Entry& e = entries[q][k];
      for (int o = cursor; o + e.devices <= K; ++o) {
        pick[q] = static_cast<int>(k);
        offset[q] = o;
        span[q] = level_of_devices(m, device_range(o, e.devices));
        double mx = running_max;
        if (q > 0) {
          const Entry& pe = entries[q - 1][pick[q - 1]];
          const double in = q - 1 == 0 ? 0.0 : pe.in[edge_level(q - 2)];
          mx = std::max(mx, stage_latency(pe.core[span[q - 1]], in, pe.out[edge_level(q - 1)]));
          if (batch_time(mx, micro_batches, p, sync) > best) continue;
        }
        dfs(q + 1, o + e.devices, mx);
      }
    }
  }

  // Level of the edge between stage a and stage a + 1.
  int edge_level(int a) const {
    std::vector<int> devs = device_range(offset[a], entries[a][pick[a]].devices);
    const auto more = device_range(offset[a + 1], entries[a + 1][pick[a + 1]].devices);
    devs.insert(devs.end(), more.begin(), more.end());
    return level_of_devices(m, devs);
  }
};

}  // namespace

OracleResult brute_force_optimum(const ModelGraph& g, const LevelCostMatrix& m, const SearchSpace& space,
                                 const OracleLimits& limits) {
  g.validate();
  const int L = g.num_layers();
  if (L > limits.max_layers || m.num_levels() > limits.max_levels) {
    fail(ErrorKind::InvalidArgument, "oracle refuses instance: limits are L <= " +
                                         std::to_string(limits.max_layers) + ", K <= " +
                                         std::to_string(limits.max_devices) + ", levels <= " +
                                         std::to_string(limits.max_levels));
  }
  const auto points = sweep_points(g, m, space);
  for (const auto& pt : points) {
    if (pt.reason == Infeasibility::None && pt.devices_per_pipeline > limits.max_devices) {
      fail(ErrorKind::InvalidArgument, "oracle refuses instance: K=" + std::to_string(pt.devices_per_pipeline) +
                                           " exceeds K <= " + std::to_string(limits.max_devices));
    }
  }
  std::set<int> reps(space.stage_replicas.begin(), space.stage_replicas.end());
  if (reps.empty()) reps.insert(1);
  const auto variants = variant_shapes(g);
  const int nl = m.num_levels();

  OracleResult result;
  for (const auto& pt : points) {
    if (pt.reason != Infeasibility::None) continue;
    const ModelGraph gm = rescale_microbatch(g, pt.micro_batch_size);
    const int K = pt.devices_per_pipeline;
    const int S = std::min({space.max_stages, L, K});
    for (unsigned mask = 0; mask < (1u << (L - 1)); ++mask) {
      std::vector<int> bounds{0};
      for (int b = 1; b < L; ++b) {
        if (mask & (1u << (b - 1))) bounds.push_back(b);
      }
      bounds.push_back(L);
      const int p = static_cast<int>(bounds.size()) - 1;
      if (p > S) continue;

      Search search{m};
      search.K = K;
      search.p = p;
      search.micro_batches = pt.micro_batches;
      search.sync = sync_cost(gm, m, pt.d, K);
      search.entries.resize(p);
      bool empty = false;
      for (int q = 0; q < p && !empty; ++q) {
        for (const auto& v : variants) {
          bool offered = true;
          for (int i = bounds[q]; i < bounds[q + 1]; ++i) offered = offered && gm.layers[i].find(v) != nullptr;
          if (!offered) continue;
          const StageProfile sp = stage_aggregate(gm, bounds[q], bounds[q + 1], v);
          for (int r : reps) {
            for (bool rc : {false, true}) {
              auto esc = escalate_zero(sp, space.memory, p - q, gm.schedule, pt.micro_batches, r, rc);
              if (!esc || r * v.devices_per_replica() > K) continue;
              Entry e;
              e.choice = {v, r, esc->zero, esc->recompute};
              e.devices = e.choice.devices();
              for (int l = 0; l < nl; ++l) {
                e.core.push_back(stage_core_latency(sp, e.choice, m, l, pt.micro_batches));
                e.in.push_back(edge_latency(m, l, sp.input_activation_bytes, r));
                e.out.push_back(edge_latency(m, l, sp.boundary_activation_bytes, r));
              }
              search.entries[q].push_back(std::move(e));
            }
          }
        }
        empty = search.entries[q].empty();
      }
      if (empty) continue;
      search.pick.assign(p, 0);
      search.offset.assign(p, 0);
      search.span.assign(p, 0);
      search.dfs(0, 0, 0.0);
      result.leaves += search.leaves;
      if (search.best == kInf) continue;

      PlacementPlan plan;
      plan.d = pt.d;
      plan.micro_batch_size = pt.micro_batch_size;
      plan.micro_batches = pt.micro_batches;
      plan.devices_per_pipeline = K;
      for (int q = 0; q < p; ++q) {
        PlanStage st;
        st.first = bounds[q];
        st.last = bounds[q + 1];
        st.first_device = search.best_offset[q];
        st.choice = search.entries[q][search.best_pick[q]].choice;
        plan.stages.push_back(st);
      }
      evaluate_plan(plan, gm, m);
      if (plan.t_batch != search.best) fail(ErrorKind::Internal, "oracle witness does not reproduce its objective");
      if (!result.best || better_plan(plan, *result.best)) result.best = plan;
    }
  }
  return result;
}

double rescore_plan(const PlacementPlan& plan, const ModelGraph& g, const LevelCostMatrix& m) {
  PlacementPlan copy = plan;
  if (copy.devices_per_pipeline * copy.d > m.total_devices()) {
    fail(ErrorKind::InvalidArgument, "plan uses more devices than the topology has");
  }
  evaluate_plan(copy, rescale_microbatch(g, copy.micro_batch_size), m);
  return copy.t_batch;
}

OracleInstance random_instance(std::uint64_t seed, bool uniform_network) {
  std::mt19937_64 rng(seed);
  auto real = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto integer = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto chance = [&](double p) { return real(0.0, 1.0) < p; };

  OracleInstance inst;
  inst.seed = seed;

  // Topology: nested power-of-two capacities ending at the device count.
  const int levels = integer(1, 3);
  const int total = levels == 1 ? (1 << integer(0, 3)) : (levels == 2 ? (1 << integer(1, 3)) : (1 << integer(2, 3)));
  std::vector<int> caps;
  {
    std::vector<int> pool;
    for (int c = 1; c < total; c *= 2) pool.push_back(c);
    std::shuffle(pool.begin(), pool.end(), rng);
    caps.assign(pool.begin(), pool.begin() + (levels - 1));
    std::sort(caps.begin(), caps.end());
    caps.push_back(total);
  }
  double bw = real(50, 200) * 1e9;
  double alpha = real(0.0, 2e-6);
  for (int l = 0; l < levels; ++l) {
    inst.topology.levels.push_back({caps[l], bw, alpha, 1.0});
    if (!uniform_network) {
      bw /= real(2.0, 10.0);
      alpha *= real(1.0, 5.0);
    }
  }
  inst.topology.total_devices = total;

  // Model.
  ModelGraph& g = inst.g;
  const int L = integer(1, 5);
  g.global_batch = chance(0.5) ? 4 : 8;
  g.micro_batch_size = 1;
  g.schedule = chance(0.75) ? Schedule::OneFOneB : Schedule::GPipe;
  const bool wide = chance(0.6);
  const bool patchy = wide && chance(0.3);
  double layer_mem = 0.0;
  for (int i = 0; i < L; ++i) {
    LayerProfile l;
    l.id = i;
    l.is_embedding = i == 0;
    l.weight_bytes = real(0.2, 2.0) * 1e9;
    l.optimizer_state_bytes = l.weight_bytes * real(2.0, 6.0);
    l.activation_bytes = real(0.1, 1.0) * 1e9;
    l.boundary_activation_bytes = real(1.0, 200.0) * 1e6;
    VariantCost base;
    base.shape = {1, 1, 1, false};
    base.fwd_latency = real(1.0, 10.0) * 1e-3;
    base.bwd_latency = base.fwd_latency * real(1.5, 2.5);
    base.sharded_weight_bytes = l.weight_bytes;
    base.sharded_activation_bytes = l.activation_bytes;
    l.variants.push_back(base);
    if (wide && !(patchy && chance(0.4))) {
      VariantCost t2;
      t2.shape = {2, 1, 1, false};
      t2.fwd_latency = base.fwd_latency * real(0.5, 0.7);
      t2.bwd_latency = base.bwd_latency * real(0.5, 0.7);
      t2.sharded_weight_bytes = l.weight_bytes / 2;
      t2.sharded_activation_bytes = l.activation_bytes * real(0.5, 1.0);
      t2.collectives.push_back({CollectiveKind::AllReduce, 2.0 * l.boundary_activation_bytes});
      l.variants.push_back(t2);
    }
    layer_mem += 2 * l.weight_bytes + l.optimizer_state_bytes + l.activation_bytes;
    g.layers.push_back(std::move(l));
  }

  SearchSpace& sp = inst.space;
  sp.micro_batch_sizes = chance(0.5) ? std::vector<int>{1} : std::vector<int>{1, 2};
  sp.replication = total >= 2 && chance(0.5) ? std::vector<int>{1, 2} : std::vector<int>{1};
  sp.stage_replicas = chance(0.5) ? std::vector<int>{1, 2} : std::vector<int>{1};
  sp.max_stages = integer(1, L);
  sp.memory.budget_bytes = chance(0.5) ? 1e18 : real(0.4, 2.0) * layer_mem / L;
  sp.threads = 1;
  return inst;
}

std::vector<CheckRow> oracle_check(const CheckOptions& opt) {
  std::vector<CheckRow> rows;
  for (int k = 0; k < opt.count; ++k) {
    const std::uint64_t seed = opt.seed + static_cast<std::uint64_t>(k);
    const OracleInstance inst = random_instance(seed);
    const LevelCostMatrix m = build_level_matrix(inst.topology);
    std::vector<LevelCostMatrix::Row> skewed;
    for (int l = 0; l < m.num_levels(); ++l) {
      auto r = m.row(l);
      r.beta *= 1.0 + opt.perturb;
      skewed.push_back(r);
    }
    const LevelCostMatrix solver_m(skewed, m.total_devices());

    CheckRow row;
    row.seed = seed;
    row.layers = inst.g.num_layers();
    row.devices = inst.topology.total_devices;
    row.levels = m.num_levels();
    const PlanResult sol = plan(inst.g, solver_m, inst.space);
    const OracleResult orc = brute_force_optimum(inst.g, m, inst.space);
    if (sol.best) row.solver = sol.best->t_batch;
    if (orc.best) row.oracle = orc.best->t_batch;
    row.optimal = row.solver.has_value() == row.oracle.has_value() &&
                  (!row.solver || *row.solver == *row.oracle);
    row.dominates = true;
    if (opt.baselines) {
      const FlatResult flat = flat_dp(inst.g, m, inst.space);
      if (flat.rescored) row.flat_rescored = flat.rescored->t_batch;
      McmcParams mp;
      mp.iterations = opt.mcmc_iterations;
      mp.restarts = opt.mcmc_restarts;
      mp.seed = seed;
      const McmcResult mc = mcmc_search(inst.g, m, inst.space, mp);
      if (mc.best) row.mcmc = mc.best->t_batch;
      for (const auto& other : {row.flat_rescored, row.mcmc}) {
        if (!other) continue;
        if (!row.solver || *row.solver > *other) row.dominates = false;
      }
    }
    rows.push_back(row);
  }
  return rows;
}

std::string format_check_table(const std::vector<CheckRow>& rows) {
  auto num = [](const std::optional<double>& v) {
    if (!v) return std::string("infeasible");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", *v);
    return std::string(buf);
  };
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-6s %-3s %-3s %-3s %-16s %-16s %-16s %-16s %s\n", "seed", "L", "K", "lv",
                "solver_s", "oracle_s", "flat_rescored_s", "mcmc_s", "result");
  os << line;
  int failures = 0;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-6llu %-3d %-3d %-3d %-16s %-16s %-16s %-16s %s\n",
                  static_cast<unsigned long long>(r.seed), r.layers, r.devices, r.levels, num(r.solver).c_str(),
                  num(r.oracle).c_str(), num(r.flat_rescored).c_str(), num(r.mcmc).c_str(),
                  r.pass() ? "pass" : (!r.optimal ? "FAIL(optimality)" : "FAIL(dominance)"));
    os << line;
    if (!r.pass()) ++failures;
  }
  os << (failures == 0 ? "all " + std::to_string(rows.size()) + " instances pass\n"
                       : std::to_string(failures) + " of " + std::to_string(rows.size()) + " instances FAIL\n");
  return os.str();
}

}  // namespace topoplan
