#include "topoplan/report.hpp"

#include <algorithm>
#include <charconv>
#include <set>
#include <sstream>

#include "json.hpp"
#include "topoplan/error.hpp"

namespace topoplan {

using json = nlohmann::json;

namespace {

const char* kCsvColumns =
    "microbatch,d,p,t,e,c,zero_stage,recompute,t_batch_s,throughput_sps,peak_mem_bytes,status";

json stage_json(const PlanStage& s) {
  return {{"first_layer", s.first},
          {"last_layer", s.last},
          {"first_device", s.first_device},
          {"devices", s.devices()},
          {"replicas", s.choice.replicas},
          {"t", s.choice.variant.tensor},
          {"e", s.choice.variant.expert},
          {"c", s.choice.variant.context},
          {"seq", s.choice.variant.sequence_parallel},
          {"zero_stage", static_cast<int>(s.choice.zero.stage)},
          {"zero_degree", s.choice.zero.degree},
          {"recompute", s.choice.recompute},
          {"span_level", s.span_level},
          {"in_level", s.in_level},
          {"out_level", s.out_level},
          {"latency_s", s.latency},
          {"peak_mem_bytes", s.memory.peak}};
}

json point_json(const PlacementPlan& p) {
  json stages = json::array();
  for (const auto& s : p.stages) stages.push_back(stage_json(s));
  return {{"strategy", strategy_tuple(p)},
          {"p", p.p()},
          {"d", p.d},
          {"micro_batch_size", p.micro_batch_size},
          {"micro_batches", p.micro_batches},
          {"devices_per_pipeline", p.devices_per_pipeline},
          {"devices_used", p.d * p.pipeline_devices()},
          {"t_stage_s", p.t_stage},
          {"sync_s", p.sync},
          {"t_batch_s", p.t_batch},
          {"throughput_sps", p.throughput},
          {"peak_mem_bytes", p.peak_memory()},
          {"stages", std::move(stages)}};
}

struct Widths {
  int t = 1, e = 1, c = 1, s = 1, zero = 0;
  bool recompute = false;
};

Widths widths(const PlacementPlan& p) {
  Widths w;
  for (const auto& st : p.stages) {
    const auto& v = st.choice.variant;
    w.t = std::max(w.t, v.tensor);
    w.e = std::max(w.e, v.expert);
    w.c = std::max(w.c, v.context);
    if (v.sequence_parallel) w.s = std::max(w.s, v.tensor);
    w.zero = std::max(w.zero, static_cast<int>(st.choice.zero.stage));
    w.recompute = w.recompute || st.choice.recompute;
  }
  return w;
}

std::string csv_row(int mbs, int d, const std::optional<PlacementPlan>& plan, const std::string& status) {
  std::ostringstream os;
  os << mbs << "," << d << ",";
  if (plan) {
    const Widths w = widths(*plan);
    os << plan->p() << "," << w.t << "," << w.e << "," << w.c << "," << w.zero << "," << (w.recompute ? 1 : 0)
       << "," << format_number(plan->t_batch) << "," << format_number(plan->throughput) << ","
       << format_number(plan->peak_memory());
  } else {
    os << ",,,,,,,,";
  }
  os << "," << status << "\n";
  return os.str();
}

}  // namespace

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string strategy_tuple(const PlacementPlan& plan) {
  const Widths w = widths(plan);
  std::ostringstream os;
  os << "{" << plan.p() << ", " << plan.d << ", " << w.t << ", " << w.s << ", (" << w.e << "," << w.c << ")}";
  return os.str();
}

std::string plan_to_json(const PlacementPlan& plan) { return point_json(plan).dump(2) + "\n"; }

std::string plan_to_json(const PlanResult& result) {
  json doc;
  if (result.best) {
    doc["strategy"] = strategy_tuple(*result.best);
    doc["plan"] = point_json(*result.best);
  } else {
    doc["strategy"] = nullptr;
    doc["plan"] = nullptr;
  }
  struct Cand {
    double t_batch;
    int order;
    json body;
  };
  std::vector<Cand> cands;
  json log = json::array();
  for (const auto& rec : result.log) {
    json entry = {{"microbatch", rec.point.micro_batch_size},
                  {"d", rec.point.d},
                  {"devices_per_pipeline", rec.point.devices_per_pipeline},
                  {"micro_batches", rec.point.micro_batches},
                  {"status", rec.best ? "ok" : to_string(rec.reason)}};
    if (rec.best) {
      entry["t_batch_s"] = rec.best->t_batch;
      entry["binding"] = nullptr;
    } else {
      entry["t_batch_s"] = nullptr;
      entry["binding"] = to_string(rec.reason);
    }
    log.push_back(std::move(entry));
    for (const auto& c : rec.candidates) {
      json body = {{"microbatch", rec.point.micro_batch_size},
                   {"d", rec.point.d},
                   {"p", c.stages},
                   {"devices_used", rec.point.d * c.devices},
                   {"t_stage_s", c.t_stage},
                   {"t_batch_s", c.t_batch}};
      cands.push_back({c.t_batch, static_cast<int>(cands.size()), std::move(body)});
    }
  }
  std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.t_batch < b.t_batch; });
  json candidates = json::array();
  for (auto& c : cands) candidates.push_back(std::move(c.body));
  doc["candidates"] = std::move(candidates);
  doc["search_log"] = std::move(log);
  return doc.dump(2) + "\n";
}

PlacementPlan plan_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Parse, std::string("plan: ") + e.what());
  }
  try {
    const json& p = doc.contains("plan") ? doc.at("plan") : doc;
    if (p.is_null()) fail(ErrorKind::InvalidArgument, "plan document holds no feasible plan");
    PlacementPlan plan;
    plan.d = p.at("d").get<int>();
    plan.micro_batch_size = p.at("micro_batch_size").get<int>();
    plan.micro_batches = p.at("micro_batches").get<int>();
    plan.devices_per_pipeline = p.at("devices_per_pipeline").get<int>();
    for (const auto& js : p.at("stages")) {
      PlanStage s;
      s.first = js.at("first_layer").get<int>();
      s.last = js.at("last_layer").get<int>();
      s.first_device = js.at("first_device").get<int>();
      s.choice.replicas = js.at("replicas").get<int>();
      s.choice.variant = {js.at("t").get<int>(), js.at("e").get<int>(), js.at("c").get<int>(),
                          js.at("seq").get<bool>()};
      const int z = js.at("zero_stage").get<int>();
      if (z < 0 || z > 3) fail(ErrorKind::InvalidArgument, "plan: zero_stage must be in 0..3");
      s.choice.zero = {static_cast<ZeroStage>(z), js.at("zero_degree").get<int>()};
      s.choice.recompute = js.at("recompute").get<bool>();
      if (s.devices() != js.at("devices").get<int>()) {
        fail(ErrorKind::InvalidArgument, "plan: stage devices disagree with replicas x t x e x c");
      }
      plan.stages.push_back(s);
    }
    if (p.contains("t_batch_s")) plan.t_batch = p.at("t_batch_s").get<double>();
    return plan;
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("plan: ") + e.what());
  }
}

std::string report_csv(const PlanResult& result) {
  std::string out = std::string(kCsvColumns) + "\n";
  for (const auto& rec : result.log) {
    out += csv_row(rec.point.micro_batch_size, rec.point.d, rec.best, rec.best ? "ok" : to_string(rec.reason));
  }
  return out;
}

Comparison run_compare(const ModelGraph& g, const LevelCostMatrix& m, const RunConfig& cfg) {
  static const std::set<std::string> known{"nest", "flat_dp", "mcmc", "manual"};
  for (const auto& a : cfg.algorithms) {
    if (!known.count(a)) fail(ErrorKind::InvalidArgument, "unknown algorithm '" + a + "'");
  }
  Comparison out;
  for (const auto& algo : cfg.algorithms) {
    AlgorithmSummary sum;
    sum.algorithm = algo;
    if (algo == "nest") {
      const PlanResult r = plan(g, m, cfg.space);
      for (const auto& rec : r.log) {
        out.rows.push_back({algo, rec.point.micro_batch_size, rec.point.d, rec.best,
                            rec.best ? "ok" : to_string(rec.reason)});
      }
      sum.best = r.best;
    } else if (algo == "flat_dp") {
      const FlatResult r = flat_dp(g, m, cfg.space);
      for (std::size_t k = 0; k < r.flat.log.size(); ++k) {
        const auto& rec = r.flat.log[k];
        out.rows.push_back({algo, rec.point.micro_batch_size, rec.point.d, r.rescored_per_point[k],
                            rec.best ? "ok" : to_string(rec.reason)});
      }
      sum.best = r.rescored;
    } else if (algo == "mcmc") {
      const McmcResult r = mcmc_search(g, m, cfg.space, cfg.mcmc);
      out.rows.push_back({algo, r.best ? r.best->micro_batch_size : 0, r.best ? r.best->d : 0, r.best,
                          r.best ? "ok" : "infeasible"});
      sum.best = r.best;
    } else {
      if (!cfg.manual) fail(ErrorKind::InvalidArgument, "algorithm 'manual' needs a manual strategy");
      const ManualResult r = eval_manual(g, m, cfg.space, *cfg.manual);
      out.rows.push_back({algo, r.plan.micro_batch_size, r.plan.d, r.plan, r.memory_feasible ? "ok" : "memory"});
      if (r.memory_feasible) sum.best = r.plan;
    }
    sum.status = sum.best ? "ok" : "infeasible";
    out.summary.push_back(std::move(sum));
  }
  return out;
}

std::string comparison_csv(const Comparison& c) {
  std::string out = "algorithm," + std::string(kCsvColumns) + "\n";
  for (const auto& row : c.rows) {
    out += row.algorithm + "," + csv_row(row.micro_batch_size, row.d, row.plan, row.status);
  }
  return out;
}

std::string plot_csv(const Comparison& c) {
  std::optional<double> manual;
  for (const auto& s : c.summary) {
    if (s.algorithm == "manual" && s.best) manual = s.best->throughput;
  }
  std::string out = "algorithm,throughput_sps,improvement_vs_manual,status\n";
  for (const auto& s : c.summary) {
    out += s.algorithm + ",";
    if (s.best) out += format_number(s.best->throughput);
    out += ",";
    if (s.best && manual) out += format_number(s.best->throughput / *manual);
    out += "," + s.status + "\n";
  }
  return out;
}

}  // namespace topoplan
