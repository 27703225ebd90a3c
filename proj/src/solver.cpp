#include "topoplan/solver.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include "topoplan/error.hpp"

namespace topoplan {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct SuffixMin {
  double latency = kInf;
  std::int32_t devices = 0;
  std::int32_t offset = 0;
};

// Remaining tie order after latency: fewer devices, lower consumed level,
// smaller cut, smaller option index, smaller predecessor k.
bool tie_less(std::int32_t dev, int cons, int cut, int opt, int pk, const DPTable::Cell& c) {
  return std::tie(dev, cons, cut, opt, pk) <
         std::make_tuple(c.devices, static_cast<int>(c.cons_level), static_cast<int>(c.cut),
                         static_cast<int>(c.option), static_cast<int>(c.prev_k));
}

}  // namespace

const char* to_string(Infeasibility r) {
  switch (r) {
    case Infeasibility::None: return "ok";
    case Infeasibility::Memory: return "memory";
    case Infeasibility::Devices: return "devices";
    case Infeasibility::Variant: return "variant";
    case Infeasibility::Alignment: return "alignment";
    case Infeasibility::Batch: return "batch";
  }
  return "?";
}

std::vector<SweepPoint> sweep_points(const ModelGraph& g, const LevelCostMatrix& m, const SearchSpace& space) {
  int total = m.total_devices();
  if (space.total_devices > 0) {
    if (space.total_devices > total) {
      fail(ErrorKind::InvalidArgument, "requested " + std::to_string(space.total_devices) +
                                           " devices but the topology has " + std::to_string(total));
    }
    total = space.total_devices;
  }
  std::set<int> sizes(space.micro_batch_sizes.begin(), space.micro_batch_sizes.end());
  if (sizes.empty()) sizes.insert(g.micro_batch_size);
  std::set<int> degrees(space.replication.begin(), space.replication.end());
  if (degrees.empty()) {
    for (int d = 1; d <= total; d *= 2) degrees.insert(d);
  }
  if (*sizes.begin() < 1) fail(ErrorKind::InvalidArgument, "microbatch sizes must be >= 1");
  if (*degrees.begin() < 1) fail(ErrorKind::InvalidArgument, "replication degrees must be >= 1");

  std::vector<SweepPoint> out;
  for (int mbs : sizes) {
    for (int d : degrees) {
      SweepPoint p;
      p.micro_batch_size = mbs;
      p.d = d;
      if (d > total) {
        p.reason = Infeasibility::Devices;
      } else {
        p.devices_per_pipeline = total / d;
        if (!replica_regions_aligned(m, p.devices_per_pipeline)) {
          p.reason = Infeasibility::Alignment;
        } else if (g.global_batch % (static_cast<long long>(mbs) * d) != 0) {
          p.reason = Infeasibility::Batch;
        } else {
          p.micro_batches = g.global_batch / (mbs * d);
        }
      }
      out.push_back(p);
    }
  }
  return out;
}

std::vector<StageOption> stage_options(const ModelGraph& g, const SearchSpace& space) {
  std::set<int> reps(space.stage_replicas.begin(), space.stage_replicas.end());
  if (reps.empty()) reps.insert(1);
  if (*reps.begin() < 1) fail(ErrorKind::InvalidArgument, "stage replica counts must be >= 1");
  std::vector<StageOption> out;
  for (const auto& v : variant_shapes(g)) {
    for (int r : reps) {
      for (bool rc : {false, true}) out.push_back({v, r, rc});
    }
  }
  if (out.size() > 65535) fail(ErrorKind::InvalidArgument, "too many stage options");
  return out;
}

DPTable::DPTable(const ModelGraph& g, const LevelCostMatrix& m, int devices_per_pipeline, int max_stages)
    : layers_(g.num_layers()), levels_(m.num_levels()), k_(devices_per_pipeline), stages_(max_stages) {
  if (layers_ > 32767) fail(ErrorKind::InvalidArgument, "too many layers");
  if (k_ < 1 || k_ > 65535) fail(ErrorKind::InvalidArgument, "devices per pipeline outside [1, 65535]");
  slices_.resize(stages_);
  for (int s = 1; s <= stages_; ++s) slices_[s - 1].resize(static_cast<std::size_t>(rows(s)) * k_);
}

int DPTable::rows(int stages) const { return layers_ >= stages ? 1 + (layers_ - stages) * levels_ : 0; }

int DPTable::row(int level, int start) const { return start == 0 ? 0 : 1 + (start - 1) * levels_ + level; }

bool DPTable::has_cell(int level, int start, int stages) const {
  if (stages < 1 || stages > stages_ || start < 0 || start > layers_ - stages) return false;
  if (start == 0) return level == kHead;
  return level >= 0 && level < levels_;
}

const DPTable::Cell& DPTable::cell(int level, int start, int offset, int stages) const {
  if (!has_cell(level, start, stages) || offset < 0 || offset >= k_) {
    fail(ErrorKind::Internal, "DP cell index out of range");
  }
  return slices_[stages - 1][static_cast<std::size_t>(row(level, start)) * k_ + offset];
}

DPTable::Cell& DPTable::cell(int level, int start, int offset, int stages) {
  return const_cast<Cell&>(static_cast<const DPTable&>(*this).cell(level, start, offset, stages));
}

class Solver {
 public:
  Solver(const SolveContext& ctx, DPTable& table) : ctx_(ctx), t_(table), g_(*ctx.g), m_(*ctx.m) {
    K_ = ctx.devices_per_pipeline;
    L_ = g_.num_layers();
    nl_ = m_.num_levels();
    for (std::size_t k = 0; k < ctx.options.size(); ++k) {
      const auto& v = ctx.options[k].variant;
      auto it = std::find(variants_.begin(), variants_.end(), v);
      if (it == variants_.end()) {
        variants_.push_back(v);
        option_variant_.push_back(static_cast<int>(variants_.size()) - 1);
      } else {
        option_variant_.push_back(static_cast<int>(it - variants_.begin()));
      }
      const int a = ctx.options[k].devices();
      if (a <= K_ && !span_.count(a)) {
        auto& tab = span_[a];
        for (int o = 0; o + a <= K_; ++o) tab.push_back(static_cast<std::int8_t>(m_.span_level(o, a)));
      }
    }
    block_.assign(nl_, std::vector<int>(K_ + 1, 0));
    for (int l = 0; l + 1 < nl_; ++l) {
      for (int o = 0; o <= K_; ++o) block_[l][o] = o / m_.row(l).capacity;
    }
  }

  Infeasibility run() {
    for (int s = 1; s <= t_.max_stages(); ++s) {
      if (s > 1) build_suffix_min(s - 1);
      const int last_start = L_ - s;
      std::atomic<int> next{0};
      auto worker = [&] {
        for (int i = next++; i <= last_start; i = next++) fill_start(i, s);
      };
      const int n = std::max(1, std::min(ctx_.threads, last_start + 1));
      if (n == 1) {
        worker();
      } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < n; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
      }
    }
    if (memory_fail_) return Infeasibility::Memory;
    if (device_fail_) return Infeasibility::Devices;
    if (variant_fail_) return Infeasibility::Variant;
    return Infeasibility::Devices;
  }

 private:
  const SuffixMin& sm(int level, int start, int offset) const {
    return suffix_min_[(static_cast<std::size_t>(start - 1) * nl_ + level) * K_ + offset];
  }

  // Within-block suffix minimum over start offsets >= x of slice `s`.
  void build_suffix_min(int s) {
    suffix_min_.assign(static_cast<std::size_t>(std::max(0, L_ - s)) * nl_ * K_, SuffixMin{});
    for (int j = 1; j <= L_ - s; ++j) {
      for (int l = 0; l < nl_; ++l) {
        SuffixMin* out = &suffix_min_[(static_cast<std::size_t>(j - 1) * nl_ + l) * K_];
        for (int x = K_ - 1; x >= 0; --x) {
          const auto& c = t_.cell(l, j, x, s);
          SuffixMin here{c.latency, c.devices, x};
          if (x + 1 < K_ && block_[l][x] == block_[l][x + 1]) {
            const SuffixMin& nxt = out[x + 1];
            if (std::tie(nxt.latency, nxt.devices, nxt.offset) < std::tie(here.latency, here.devices, here.offset)) {
              here = nxt;
            }
          }
          out[x] = here;
        }
      }
    }
  }

  void fill_start(int i, int s) {
    const int jmax = s == 1 ? L_ : L_ - (s - 1);
    std::vector<StageProfile> sp(variants_.size());
    std::vector<char> alive(variants_.size(), 1);
    for (std::size_t v = 0; v < variants_.size(); ++v) {
      sp[v].first = sp[v].last = i;
      sp[v].variant = variants_[v];
      sp[v].input_activation_bytes = i > 0 ? g_.layers[i - 1].boundary_activation_bytes : 0.0;
    }
    std::vector<double> core(nl_), in(nl_), out(nl_);
    for (int j = i + 1; j <= jmax; ++j) {
      const auto& layer = g_.layers[j - 1];
      for (std::size_t v = 0; v < variants_.size(); ++v) {
        if (!alive[v]) continue;
        const VariantCost* cost = layer.find(variants_[v]);
        if (cost == nullptr) {
          alive[v] = 0;
          variant_fail_ = true;
          continue;
        }
        extend_stage(sp[v], layer, *cost);
      }
      if (s == 1 && j < L_) continue;

      bool any = false;
      std::optional<Escalation> off;
      for (std::size_t k = 0; k < ctx_.options.size(); ++k) {
        const StageOption& opt = ctx_.options[k];
        const int vi = option_variant_[k];
        if (!opt.recompute) off.reset();
        if (!alive[vi]) continue;
        const int a = opt.devices();
        if (a > K_) {
          device_fail_ = true;
          continue;
        }
        auto esc = escalate_zero(sp[vi], ctx_.memory, s, g_.schedule, ctx_.micro_batches, opt.replicas,
                                 opt.recompute);
        if (!opt.recompute) {
          off = esc;
        } else if (!off || off->recompute || off->zero.stage == ZeroStage::None) {
          // Starting from recompute on can only reproduce or dominate the
          // result already found from recompute off.
          any = any || off.has_value();
          continue;
        }
        if (!esc) {
          memory_fail_ = true;
          continue;
        }
        any = true;
        const StageChoice choice{opt.variant, opt.replicas, esc->zero, esc->recompute};
        for (int l = 0; l < nl_; ++l) {
          core[l] = stage_core_latency(sp[vi], choice, m_, l, ctx_.micro_batches);
          in[l] = edge_latency(m_, l, sp[vi].input_activation_bytes, opt.replicas);
          out[l] = edge_latency(m_, l, sp[vi].boundary_activation_bytes, opt.replicas);
        }
        relax(i, j, s, static_cast<int>(k), a, core, in, out);
      }
      if (!any) break;
    }
  }

  void relax(int i, int j, int s, int option, int a, const std::vector<double>& core,
             const std::vector<double>& in, const std::vector<double>& out) {
    const auto& span = span_.at(a);
    const int first_level = i == 0 ? DPTable::kHead : 0;
    for (int o = 0; o + a <= K_; ++o) {
      const int lam = span[o];
      const int x = o + a;
      auto offer = [&](double prev, std::int32_t prev_dev, int cons, int pk, double out_cost) {
        const std::int32_t dev = prev_dev + a;
        if (i == 0) {
          const double val = std::max(prev, stage_latency(core[lam], 0.0, out_cost));
          update(t_.cell(first_level, 0, o, s), val, dev, cons, j, option, pk);
          return;
        }
        for (int l = lam; l < nl_; ++l) {
          const double val = std::max(prev, stage_latency(core[lam], in[l], out_cost));
          update(t_.cell(l, i, o, s), val, dev, cons, j, option, pk);
        }
      };
      if (s == 1) {
        offer(0.0, 0, DPTable::kTail, 0, 0.0);
        continue;
      }
      if (x >= K_) break;
      for (int lc = 0; lc < nl_; ++lc) {
        if (lc + 1 < nl_ && block_[lc][o] != block_[lc][x]) continue;
        const SuffixMin& p = sm(lc, j, x);
        if (p.latency == kInf) continue;
        offer(p.latency, p.devices, lc, K_ - p.offset, out[lc]);
      }
    }
  }

  static void update(DPTable::Cell& c, double val, std::int32_t dev, int cons, int cut, int opt, int pk) {
    if (val < c.latency || (val == c.latency && tie_less(dev, cons, cut, opt, pk, c))) {
      c.latency = val;
      c.devices = dev;
      c.cons_level = static_cast<std::int8_t>(cons);
      c.cut = static_cast<std::int16_t>(cut);
      c.option = static_cast<std::uint16_t>(opt);
      c.prev_k = static_cast<std::uint16_t>(pk);
    }
  }

  const SolveContext& ctx_;
  DPTable& t_;
  const ModelGraph& g_;
  const LevelCostMatrix& m_;
  int K_ = 0, L_ = 0, nl_ = 0;
  std::vector<ParallelVariant> variants_;
  std::vector<int> option_variant_;
  std::map<int, std::vector<std::int8_t>> span_;
  std::vector<std::vector<int>> block_;
  std::vector<SuffixMin> suffix_min_;
  std::atomic<bool> memory_fail_{false}, device_fail_{false}, variant_fail_{false};
};

SolveOutcome solve(const SolveContext& ctx) {
  if (ctx.g == nullptr || ctx.m == nullptr) fail(ErrorKind::InvalidArgument, "solve: model and matrix required");
  if (ctx.micro_batches < 1 || ctx.d < 1 || ctx.max_stages < 1) {
    fail(ErrorKind::InvalidArgument, "solve: microbatches, d and max stages must be >= 1");
  }
  if (ctx.devices_per_pipeline > ctx.m->total_devices()) {
    fail(ErrorKind::InvalidArgument, "solve: pipeline region larger than the topology");
  }
  const int stages = std::min({ctx.max_stages, ctx.g->num_layers(), ctx.devices_per_pipeline});
  SolveOutcome out{DPTable(*ctx.g, *ctx.m, ctx.devices_per_pipeline, std::max(stages, 0)), Infeasibility::None};
  if (ctx.g->num_layers() == 0) {
    out.reason = Infeasibility::Variant;
    return out;
  }
  Solver solver(ctx, out.table);
  out.reason = solver.run();
  return out;
}

std::vector<ClosedCandidate> close_batch_time(const DPTable& table, const SolveContext& ctx) {
  std::vector<ClosedCandidate> out;
  if (table.num_layers() == 0) return out;
  const double sync = sync_cost(*ctx.g, *ctx.m, ctx.d, ctx.devices_per_pipeline);
  for (int s = 1; s <= table.max_stages(); ++s) {
    const DPTable::Cell* best = nullptr;
    int best_offset = 0;
    for (int o = 0; o < table.devices(); ++o) {
      const auto& c = table.cell(DPTable::kHead, 0, o, s);
      if (!c.feasible()) continue;
      if (best == nullptr || c.latency < best->latency ||
          (c.latency == best->latency && c.devices < best->devices)) {
        best = &c;
        best_offset = o;
      }
    }
    if (best == nullptr) continue;
    ClosedCandidate cand;
    cand.stages = s;
    cand.offset = best_offset;
    cand.t_stage = best->latency;
    cand.t_batch = batch_time(best->latency, ctx.micro_batches, s, sync);
    cand.devices = best->devices;
    out.push_back(cand);
  }
  std::stable_sort(out.begin(), out.end(), [](const ClosedCandidate& a, const ClosedCandidate& b) {
    return std::tie(a.t_batch, a.devices, a.stages) < std::tie(b.t_batch, b.devices, b.stages);
  });
  return out;
}

PlacementPlan reconstruct_plan(const DPTable& table, const SolveContext& ctx, const ClosedCandidate& c) {
  const ModelGraph& g = *ctx.g;
  PlacementPlan plan;
  plan.d = ctx.d;
  plan.micro_batch_size = g.micro_batch_size;
  plan.micro_batches = ctx.micro_batches;
  plan.devices_per_pipeline = ctx.devices_per_pipeline;

  int level = DPTable::kHead;
  int start = 0;
  int offset = c.offset;
  for (int s = c.stages; s >= 1; --s) {
    if (!table.has_cell(level, start, s)) fail(ErrorKind::Internal, "broken backpointer chain");
    const auto& cell = table.cell(level, start, offset, s);
    if (!cell.feasible()) fail(ErrorKind::Internal, "backpointer leads to an infeasible cell");
    const StageOption& opt = ctx.options.at(cell.option);
    const StageProfile sp = stage_aggregate(g, start, cell.cut, opt.variant);
    auto esc = escalate_zero(sp, ctx.memory, s, g.schedule, ctx.micro_batches, opt.replicas, opt.recompute);
    if (!esc) fail(ErrorKind::Internal, "reconstructed stage no longer fits memory");
    PlanStage st;
    st.first = start;
    st.last = cell.cut;
    st.first_device = offset;
    st.choice = {opt.variant, opt.replicas, esc->zero, esc->recompute};
    plan.stages.push_back(st);
    if (s == 1) {
      if (cell.cut != g.num_layers() || cell.cons_level != DPTable::kTail) {
        fail(ErrorKind::Internal, "backpointer chain ends before the last layer");
      }
      break;
    }
    level = cell.cons_level;
    start = cell.cut;
    offset = table.devices() - cell.prev_k;
  }
  evaluate_plan(plan, g, *ctx.m);
  if (std::fabs(plan.t_stage - c.t_stage) > 1e-9 * std::fabs(c.t_stage)) {
    std::ostringstream os;
    os.precision(17);
    os << "reconstructed bottleneck " << plan.t_stage << " s disagrees with DP value " << c.t_stage << " s";
    fail(ErrorKind::Internal, os.str());
  }
  return plan;
}

bool better_plan(const PlacementPlan& a, const PlacementPlan& b) {
  const int da = a.d * a.pipeline_devices();
  const int db = b.d * b.pipeline_devices();
  return std::make_tuple(a.t_batch, da, a.p()) < std::make_tuple(b.t_batch, db, b.p());
}

std::string PlanResult::failure_summary() const {
  std::ostringstream os;
  os << "no feasible plan\n";
  for (const auto& r : log) {
    os << "  microbatch=" << r.point.micro_batch_size << " d=" << r.point.d << ": "
       << (r.best ? "feasible" : to_string(r.reason)) << "\n";
  }
  return os.str();
}

PlanResult plan_with_pricing(const ModelGraph& g, const LevelCostMatrix& topology, const LevelCostMatrix& pricing,
                             const SearchSpace& space) {
  g.validate();
  if (space.max_stages < 1) fail(ErrorKind::InvalidArgument, "max stages must be >= 1");
  if (!(space.memory.budget_bytes > 0.0)) fail(ErrorKind::InvalidArgument, "memory budget must be > 0");
  PlanResult result;
  const auto points = sweep_points(g, topology, space);
  const auto options = stage_options(g, space);
  std::map<int, ModelGraph> scaled;
  for (const auto& pt : points) {
    SweepRecord rec;
    rec.point = pt;
    rec.reason = pt.reason;
    if (pt.reason == Infeasibility::None) {
      auto it = scaled.find(pt.micro_batch_size);
      if (it == scaled.end()) it = scaled.emplace(pt.micro_batch_size, rescale_microbatch(g, pt.micro_batch_size)).first;
      SolveContext ctx;
      ctx.g = &it->second;
      ctx.m = &pricing;
      ctx.options = options;
      ctx.memory = space.memory;
      ctx.devices_per_pipeline = pt.devices_per_pipeline;
      ctx.d = pt.d;
      ctx.micro_batches = pt.micro_batches;
      ctx.max_stages = space.max_stages;
      ctx.threads = std::max(1, space.threads);
      SolveOutcome outcome = solve(ctx);
      rec.candidates = close_batch_time(outcome.table, ctx);
      if (rec.candidates.empty()) {
        rec.reason = outcome.reason;
      } else {
        rec.best = reconstruct_plan(outcome.table, ctx, rec.candidates.front());
        if (!result.best || better_plan(*rec.best, *result.best)) result.best = rec.best;
      }
    }
    result.log.push_back(std::move(rec));
  }
  return result;
}

PlanResult plan(const ModelGraph& g, const LevelCostMatrix& topology, const SearchSpace& space) {
  return plan_with_pricing(g, topology, topology, space);
}

}  // namespace topoplan
