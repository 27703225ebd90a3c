// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "topoplan/baselines.hpp"
#include "topoplan/memmodel.hpp"
#include "topoplan/oracle.hpp"
#include "topoplan/solver.hpp"
#include "topoplan/synthetic.hpp"

using namespace topoplan;
namespace fs = std::filesystem;

namespace {

constexpr int kOracleInstances = 200;
constexpr int kUniformInstances = 100;
constexpr int kMemoryProfiles = 1000;
constexpr double kSpreadLimit = 0.02;
constexpr double kScaleLimitSeconds = 2.0 * 3600.0;

int g_failed = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failed;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// Criterion 3 reuses the oracle suite's rows; its line is printed in order later.
std::function<void()> criteria_1_and_3() {
  const auto t0 = std::chrono::steady_clock::now();
  CheckOptions opt;
  opt.count = kOracleInstances;
  opt.seed = 0;
  const auto rows = oracle_check(opt);
  int optimal = 0, dominated = 0, feasible = 0, constrained = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    optimal += rows[i].optimal;
    dominated += rows[i].dominates;
    feasible += rows[i].oracle.has_value();
    constrained += random_instance(rows[i].seed).space.memory.budget_bytes < 1e17;
  }
  const double secs = seconds_since(t0);
  report(1, optimal == kOracleInstances && secs < 300.0,
         std::to_string(optimal) + "/" + std::to_string(kOracleInstances) + " exact matches (" +
             std::to_string(feasible) + " feasible, " + std::to_string(constrained) + " memory-constrained)" +
             fmt(", %.1f s", secs));
  return [dominated] {
    report(3, dominated == kOracleInstances,
           std::to_string(dominated) + "/" + std::to_string(kOracleInstances) +
               " instances with solver <= flat_dp rescored and <= best-of-10 MCMC");
  };
}

void criterion_2() {
  int equal = 0, feasible = 0;
  for (int k = 0; k < kUniformInstances; ++k) {
    const OracleInstance inst = random_instance(1000 + k, true);
    const LevelCostMatrix m = build_level_matrix(inst.topology);
    const PlanResult nest = plan(inst.g, m, inst.space);
    const FlatResult flat = flat_dp(inst.g, m, inst.space);
    const bool same = nest.best.has_value() == flat.flat.best.has_value() &&
                      (!nest.best || nest.best->t_batch == flat.flat.best->t_batch);
    equal += same;
    feasible += nest.best.has_value();
  }
  report(2, equal == kUniformInstances,
         std::to_string(equal) + "/" + std::to_string(kUniformInstances) + " uniform-network instances equal (" +
             std::to_string(feasible) + " feasible)");
}

// Byte fields are integers below 2^40 and ZeRO degrees are powers of two, so
// every quantity below is exact in double precision.
void criterion_4() {
  std::mt19937_64 rng(20240101);
  auto bytes = [&](double hi) { return std::floor(std::uniform_real_distribution<double>(0.0, hi)(rng)); };
  const ZeroStage stages[] = {ZeroStage::None, ZeroStage::Zero1, ZeroStage::Zero2, ZeroStage::Zero3};
  int affine = 0, relief = 0, minimal = 0;
  for (int k = 0; k < kMemoryProfiles; ++k) {
    StageProfile sp;
    sp.last = 1;
    sp.sharded_weight_bytes = bytes(1e11);
    sp.weight_bytes = sp.sharded_weight_bytes;
    sp.optimizer_state_bytes = bytes(6e11);
    sp.activation_bytes = bytes(5e10);
    sp.input_activation_bytes = bytes(5e9);
    const int m = 1 + static_cast<int>(rng() % 64);
    const int degree = 1 << (1 + rng() % 3);
    const bool rc = rng() % 2;
    const ZeroConfig zc{stages[rng() % 4], degree};

    bool ok = true;
    const MemoryBreakdown base = stage_memory(sp, 1, Schedule::OneFOneB, rc, zc, m);
    ok = ok && base.peak == base.weights_term + base.opt_states + base.activations;
    for (int s = 1; s < 40 && ok; ++s) {
      const double a = stage_memory(sp, s, Schedule::OneFOneB, rc, zc, m).peak;
      const double b = stage_memory(sp, s + 1, Schedule::OneFOneB, rc, zc, m).peak;
      ok = b - a == base.stashed_per_microbatch && a == base.peak + (s - 1) * base.stashed_per_microbatch;
    }
    affine += ok;

    ok = true;
    const int pos = 1 + static_cast<int>(rng() % 16);
    for (int d : {2, 4, 8}) {
      double prev = stage_memory(sp, pos, Schedule::OneFOneB, rc, {}, m).peak;
      for (int z = 1; z < 4; ++z) {
        const double cur = stage_memory(sp, pos, Schedule::OneFOneB, rc, {stages[z], d}, m).peak;
        ok = ok && cur <= prev;
        prev = cur;
        if (d < 8) ok = ok && stage_memory(sp, pos, Schedule::OneFOneB, rc, {stages[z], 2 * d}, m).peak <= cur;
      }
    }
    relief += ok;

    // Minimal escalation: the result fits and nothing earlier in the order does.
    MemoryPolicy policy;
    policy.order = rng() % 2 ? EscalationOrder::ZeroFirst : EscalationOrder::RecomputeFirst;
    const double top = stage_memory(sp, pos, Schedule::OneFOneB, false, {}, m).peak;
    policy.budget_bytes = std::uniform_real_distribution<double>(0.05, 1.1)(rng) * top;
    std::vector<std::pair<ZeroStage, bool>> order;
    if (policy.order == EscalationOrder::ZeroFirst) {
      for (bool r : {rc, true}) {
        for (ZeroStage z : stages) order.push_back({z, r});
        if (r) break;
      }
    } else {
      for (ZeroStage z : stages) {
        order.push_back({z, rc});
        if (!rc) order.push_back({z, true});
      }
    }
    const auto e = escalate_zero(sp, policy, pos, Schedule::OneFOneB, m, degree, rc);
    ok = true;
    bool found = false;
    for (const auto& [z, r] : order) {
      const ZeroConfig cfg{z, z == ZeroStage::None ? 1 : degree};
      const bool fits = stage_memory(sp, pos, Schedule::OneFOneB, r, cfg, m).peak <= policy.budget_bytes;
      if (!fits) continue;
      ok = e && e->zero.stage == z && e->recompute == r && e->memory.peak <= policy.budget_bytes;
      found = true;
      break;
    }
    if (!found) ok = !e;
    minimal += ok;
  }
  report(4, affine == kMemoryProfiles && relief == kMemoryProfiles && minimal == kMemoryProfiles,
         "affine in s " + std::to_string(affine) + "/" + std::to_string(kMemoryProfiles) + ", ZeRO relief " +
             std::to_string(relief) + "/" + std::to_string(kMemoryProfiles) + ", minimal escalation " +
             std::to_string(minimal) + "/" + std::to_string(kMemoryProfiles));
}

void criterion_5() {
  const ModelGraph g = synthetic_model("llama3_70b");
  const LevelCostMatrix m = build_level_matrix(gen_topology("fat_tree", {{"devices", 1024}}));
  SearchSpace sp;
  sp.memory.budget_bytes = 24e9;
  sp.replication = {1};
  sp.max_stages = 81;
  const PlanResult with = plan(g, m, sp);
  int z3 = 0;
  bool degree8 = false;
  if (with.best) {
    for (const auto& s : with.best->stages) {
      if (s.choice.zero.stage == ZeroStage::Zero3) {
        ++z3;
        degree8 = degree8 || s.choice.zero.degree == 8;
      }
    }
  }
  sp.memory.allow_zero = false;
  const PlanResult without = plan(g, m, sp);
  bool memory_bound = !without.best;
  for (const auto& rec : without.log) memory_bound = memory_bound && rec.reason == Infeasibility::Memory;
  report(5, with.best && z3 > 0 && degree8 && memory_bound,
         std::string("24 GB budget: ") + (with.best ? "feasible" : "infeasible") + ", " + std::to_string(z3) +
             " ZeRO-3 stages" + (degree8 ? " (degree 8)" : "") + "; without ZeRO: " +
             (without.best ? "feasible" : "no feasible plan (memory)"));
}

void criterion_6() {
  const ModelGraph g = synthetic_model("uniform24");
  const LevelCostMatrix m = build_level_matrix(gen_topology("spine_leaf", {{"oversub", 2}}));
  SearchSpace sp;
  sp.memory.budget_bytes = 16e9;
  sp.stage_replicas = {1};
  sp.replication = {1, 2, 4, 8};
  const PlanResult nest = plan(g, m, sp);
  const FlatResult flat = flat_dp(g, m, sp);
  if (!nest.best || !flat.rescored) {
    report(6, false, "no plan found");
    return;
  }
  const PlacementPlan& p = *nest.best;
  bool level0 = true;
  double lo = p.stages[0].latency, hi = lo;
  for (int q = 0; q < p.p(); ++q) {
    if (q + 1 < p.p()) level0 = level0 && p.stages[q].out_level == 0;
    lo = std::min(lo, p.stages[q].latency);
    hi = std::max(hi, p.stages[q].latency);
  }
  const double spread = (hi - lo) / lo;
  const bool worse = flat.rescored->t_batch > p.t_batch;
  report(6, level0 && spread < kSpreadLimit && worse,
         "p=" + std::to_string(p.p()) + " d=" + std::to_string(p.d) + (level0 ? ", all edges level 0" : ", edges cross nodes") +
             fmt(", spread %.3f%%; t_batch %.6g s vs flat_dp rescored %.6g s", 100.0 * spread, p.t_batch,
                 flat.rescored->t_batch));
}

void criterion_7() {
  struct Case {
    int layers, devices, d, max_stages;
    double beta;
    double expect;  // hand-computed t_batch
  };
  // Layers: fwd 0.1 s, bwd 0.2 s, 1 GB weights; global batch 8.
  const Case cases[] = {
      {1, 1, 1, 1, 0.0, 0.3 * 8},                // s = 1, sync = 0
      {2, 1, 2, 1, 1e-9, 0.6 * 4 + 2.0},          // s = 1, AllReduce of 2 GB over 2 replicas
      {2, 2, 1, 2, 0.0, 0.3 * (8 + 2 - 1)},      // s = 2, free edges, sync = 0
      {4, 4, 1, 4, 0.0, 0.3 * (8 + 4 - 1)},      // s = 4
  };
  int exact = 0, hand = 0, total = 0;
  for (const Case& c : cases) {
    ModelGraph g;
    for (int i = 0; i < c.layers; ++i) {
      LayerProfile l;
      l.id = i;
      l.weight_bytes = 1e9;
      VariantCost v;
      v.fwd_latency = 0.1;
      v.bwd_latency = 0.2;
      v.sharded_weight_bytes = 1e9;
      l.variants.push_back(v);
      g.layers.push_back(l);
    }
    g.global_batch = 8;
    const LevelCostMatrix m({{c.devices * c.d, 0.0, c.beta}}, c.devices * c.d);
    SearchSpace sp;
    sp.stage_replicas = {1};
    sp.memory.budget_bytes = 1e18;
    SolveContext ctx;
    ctx.g = &g;
    ctx.m = &m;
    ctx.options = stage_options(g, sp);
    ctx.memory = sp.memory;
    ctx.devices_per_pipeline = c.devices;
    ctx.d = c.d;
    ctx.micro_batches = 8 / c.d;
    ctx.max_stages = c.max_stages;
    const SolveOutcome out = solve(ctx);
    const auto cands = close_batch_time(out.table, ctx);
    const double sync = sync_cost(g, m, c.d, c.devices);
    for (const auto& cand : cands) {
      ++total;
      exact += cand.t_batch == cand.t_stage * (ctx.micro_batches + cand.stages - 1) + sync;
    }
    hand += !cands.empty() && std::abs(cands.front().t_batch - c.expect) <= 1e-12 * c.expect;
  }
  report(7, exact == total && hand == 4,
         std::to_string(exact) + "/" + std::to_string(total) + " candidates match t_stage*(m+s-1)+sync exactly, " +
             std::to_string(hand) + "/4 hand-computed optima");
}

void criterion_8() {
  const auto t0 = std::chrono::steady_clock::now();
  const ModelGraph g = synthetic_model("gpt3_175b");
  const LevelCostMatrix m = build_level_matrix(gen_topology("fat_tree", {{"devices", 1024}}));
  SearchSpace sp;
  sp.micro_batch_sizes = {1, 2, 4, 8};
  const PlanResult r = plan(g, m, sp);
  const double secs = seconds_since(t0);
  report(8, r.best && secs < kScaleLimitSeconds,
         std::to_string(g.num_layers()) + " layers, " + std::to_string(m.num_levels()) + " levels, 1024 devices: " +
             (r.best ? "feasible" : "infeasible") + fmt(" in %.1f s", secs));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void criterion_9() {
  const fs::path dir = fs::temp_directory_path() / "topoplan_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string cli = TOPOPLAN_CLI;
  auto run = [&](const std::string& args) {
    return std::system((cli + " " + args + " > /dev/null 2>&1").c_str()) == 0;
  };
  bool ok = run("topo-gen spine_leaf --out " + (dir / "sl.json").string()) &&
            run("topo-gen fat_tree --param devices=1024 --out " + (dir / "ft.json").string());
  const std::string plan_args = "plan --model synthetic:llama3_70b --topology " + (dir / "ft.json").string() +
                                " --budget-bytes 24e9 --replication 1 --max-stages 81 --seed 5";
  const std::string cmp_args = "compare --model synthetic:uniform24 --topology " + (dir / "sl.json").string() +
                               " --budget-bytes 16e9 --manual-strategy 8,1,1,1,1 --mcmc-iterations 1000 --seed 5";
  const char* runs[] = {"a", "b", "c"};
  const char* threads[] = {"1", "1", "4"};
  for (int i = 0; i < 3 && ok; ++i) {
    const std::string t = std::string(" --threads ") + threads[i];
    ok = run(plan_args + t + " --out-dir " + (dir / "plan" / runs[i]).string()) &&
         run(cmp_args + t + " --out-dir " + (dir / "cmp" / runs[i]).string());
  }
  int identical = 0;
  for (const auto& [sub, file] : std::vector<std::pair<std::string, std::string>>{
           {"plan", "plan.json"}, {"plan", "report.csv"}, {"cmp", "compare.csv"}, {"cmp", "plot.csv"}}) {
    const std::string a = slurp(dir / sub / "a" / file);
    identical += ok && !a.empty() && a == slurp(dir / sub / "b" / file) && a == slurp(dir / sub / "c" / file);
  }
  fs::remove_all(dir);
  report(9, ok && identical == 4,
         std::to_string(identical) + "/4 output files byte-identical across 3 runs (1, 1 and 4 threads)");
}

}  // namespace

int main() {
  const auto criterion_3 = criteria_1_and_3();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  std::printf("%s\n", g_failed == 0 ? "all criteria pass" : "some criteria FAIL");
  return g_failed == 0 ? 0 : 1;
}
