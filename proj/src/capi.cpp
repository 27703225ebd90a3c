#include "topoplan/topoplan.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <sstream>
#include <string>

#include "json.hpp"
#include "topoplan/baselines.hpp"
#include "topoplan/error.hpp"
#include "topoplan/graph.hpp"
#include "topoplan/netmodel.hpp"
#include "topoplan/oracle.hpp"
#include "topoplan/report.hpp"
#include "topoplan/solver.hpp"
#include "topoplan/synthetic.hpp"

using namespace topoplan;

struct tp_model {
  ModelGraph graph;
};

struct tp_topology {
  TopologySpec spec;
  LevelCostMatrix matrix;
};

struct tp_config {
  RunConfig run;
};

struct tp_report {
  PlanResult result;
};

struct tp_comparison {
  Comparison cmp;
};

namespace {

thread_local std::string g_last_error;

tp_status status_of(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidArgument: return TP_ERR_INVALID_ARGUMENT;
    case ErrorKind::Parse: return TP_ERR_PARSE;
    case ErrorKind::Io: return TP_ERR_IO;
    case ErrorKind::Infeasible: return TP_ERR_INFEASIBLE;
    case ErrorKind::Internal: return TP_ERR_INTERNAL;
  }
  return TP_ERR_INTERNAL;
}

template <typename F>
tp_status guarded(F&& body) {
  try {
    g_last_error.clear();
    body();
    return TP_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return TP_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return TP_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) fail(ErrorKind::InvalidArgument, std::string(what) + " must not be null");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::vector<int> int_list(const int* v, size_t n) {
  if (n > 0) require(v, "list");
  return std::vector<int>(v, v + n);
}

tp_topology* make_topology(TopologySpec spec) {
  auto* t = new tp_topology{std::move(spec), {}};
  try {
    t->matrix = build_level_matrix(t->spec);
  } catch (...) {
    delete t;
    throw;
  }
  return t;
}

}  // namespace

extern "C" {

const char* tp_last_error(void) { return g_last_error.c_str(); }

const char* tp_status_name(tp_status status) {
  switch (status) {
    case TP_OK: return "ok";
    case TP_ERR_INVALID_ARGUMENT: return "invalid argument";
    case TP_ERR_PARSE: return "parse error";
    case TP_ERR_IO: return "i/o error";
    case TP_ERR_INFEASIBLE: return "infeasible";
    case TP_ERR_INTERNAL: return "internal error";
  }
  return "unknown";
}

void tp_string_free(char* s) { std::free(s); }

tp_status tp_model_load(const char* path, tp_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new tp_model{load_model_spec(path)};
  });
}

tp_status tp_model_from_json(const char* text, tp_model** out) {
  return guarded([&] {
    require(text, "text");
    require(out, "out");
    *out = new tp_model{parse_model_spec(text)};
  });
}

tp_status tp_model_synthetic(const char* name, tp_model** out) {
  return guarded([&] {
    require(name, "name");
    require(out, "out");
    *out = new tp_model{synthetic_model(name)};
  });
}

tp_status tp_model_to_json(const tp_model* model, char** out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    *out = dup_string(model_to_json(model->graph));
  });
}

int tp_model_num_layers(const tp_model* model) { return model ? model->graph.num_layers() : -1; }

void tp_model_free(tp_model* model) { delete model; }

tp_status tp_topology_load(const char* path, tp_topology** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = make_topology(load_topology(path));
  });
}

tp_status tp_topology_from_json(const char* text, tp_topology** out) {
  return guarded([&] {
    require(text, "text");
    require(out, "out");
    *out = make_topology(parse_topology(text));
  });
}

tp_status tp_topology_generate(const char* kind, const char* params_json, tp_topology** out) {
  return guarded([&] {
    require(kind, "kind");
    require(out, "out");
    std::map<std::string, double> params;
    if (params_json != nullptr && *params_json != '\0') {
      nlohmann::json doc;
      try {
        doc = nlohmann::json::parse(params_json);
        if (!doc.is_object()) fail(ErrorKind::Parse, "topology parameters must be a JSON object");
        for (const auto& [k, v] : doc.items()) params[k] = v.get<double>();
      } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Parse, std::string("topology parameters: ") + e.what());
      }
    }
    *out = make_topology(gen_topology(kind, params));
  });
}

tp_status tp_topology_to_json(const tp_topology* topo, char** out) {
  return guarded([&] {
    require(topo, "topology");
    require(out, "out");
    *out = dup_string(topology_to_json(topo->spec));
  });
}

int tp_topology_total_devices(const tp_topology* topo) { return topo ? topo->spec.total_devices : -1; }

void tp_topology_free(tp_topology* topo) { delete topo; }

tp_config* tp_config_create(void) {
  try {
    return new tp_config{};
  } catch (...) {
    g_last_error = "out of memory";
    return nullptr;
  }
}

void tp_config_free(tp_config* cfg) { delete cfg; }

tp_status tp_config_set_budget_bytes(tp_config* cfg, double bytes) {
  return guarded([&] {
    require(cfg, "config");
    if (!(bytes > 0.0)) fail(ErrorKind::InvalidArgument, "memory budget must be > 0");
    cfg->run.space.memory.budget_bytes = bytes;
  });
}

tp_status tp_config_set_devices(tp_config* cfg, int devices) {
  return guarded([&] {
    require(cfg, "config");
    if (devices < 0) fail(ErrorKind::InvalidArgument, "devices must be >= 0");
    cfg->run.space.total_devices = devices;
  });
}

tp_status tp_config_set_microbatch_sizes(tp_config* cfg, const int* sizes, size_t n) {
  return guarded([&] {
    require(cfg, "config");
    cfg->run.space.micro_batch_sizes = int_list(sizes, n);
  });
}

tp_status tp_config_set_replication(tp_config* cfg, const int* degrees, size_t n) {
  return guarded([&] {
    require(cfg, "config");
    cfg->run.space.replication = int_list(degrees, n);
  });
}

tp_status tp_config_set_stage_replicas(tp_config* cfg, const int* counts, size_t n) {
  return guarded([&] {
    require(cfg, "config");
    cfg->run.space.stage_replicas = int_list(counts, n);
  });
}

tp_status tp_config_set_max_stages(tp_config* cfg, int max_stages) {
  return guarded([&] {
    require(cfg, "config");
    if (max_stages < 1) fail(ErrorKind::InvalidArgument, "max stages must be >= 1");
    cfg->run.space.max_stages = max_stages;
  });
}

tp_status tp_config_set_threads(tp_config* cfg, int threads) {
  return guarded([&] {
    require(cfg, "config");
    if (threads < 1) fail(ErrorKind::InvalidArgument, "threads must be >= 1");
    cfg->run.space.threads = threads;
  });
}

tp_status tp_config_set_ignore_memory(tp_config* cfg, int ignore) {
  return guarded([&] {
    require(cfg, "config");
    cfg->run.space.memory.ignore_memory = ignore != 0;
  });
}

tp_status tp_config_set_allow_zero(tp_config* cfg, int allow) {
  return guarded([&] {
    require(cfg, "config");
    cfg->run.space.memory.allow_zero = allow != 0;
  });
}

tp_status tp_config_set_recompute_first(tp_config* cfg, int recompute_first) {
  return guarded([&] {
    require(cfg, "config");
    cfg->run.space.memory.order = recompute_first ? EscalationOrder::RecomputeFirst : EscalationOrder::ZeroFirst;
  });
}

tp_status tp_config_set_seed(tp_config* cfg, uint64_t seed) {
  return guarded([&] {
    require(cfg, "config");
    cfg->run.mcmc.seed = seed;
  });
}

tp_status tp_config_set_mcmc(tp_config* cfg, int iterations, int restarts) {
  return guarded([&] {
    require(cfg, "config");
    if (iterations < 1 || restarts < 1) fail(ErrorKind::InvalidArgument, "mcmc iterations and restarts must be >= 1");
    cfg->run.mcmc.iterations = iterations;
    cfg->run.mcmc.restarts = restarts;
  });
}

tp_status tp_config_set_algorithms(tp_config* cfg, const char* csv) {
  return guarded([&] {
    require(cfg, "config");
    require(csv, "algorithms");
    std::vector<std::string> algos;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.empty()) continue;
      if (item != "nest" && item != "flat_dp" && item != "mcmc" && item != "manual") {
        fail(ErrorKind::InvalidArgument, "unknown algorithm '" + item + "' (expected nest, flat_dp, mcmc, manual)");
      }
      algos.push_back(item);
    }
    if (algos.empty()) fail(ErrorKind::InvalidArgument, "algorithm list is empty");
    cfg->run.algorithms = std::move(algos);
  });
}

tp_status tp_config_set_manual(tp_config* cfg, int p, int d, int t, int e, int c, int sequence_parallel,
                               int microbatch_size, int recompute) {
  return guarded([&] {
    require(cfg, "config");
    ManualStrategy s;
    s.p = p;
    s.d = d;
    s.t = t;
    s.e = e;
    s.c = c;
    s.sequence_parallel = sequence_parallel != 0;
    s.micro_batch_size = microbatch_size;
    s.recompute = recompute != 0;
    if (p < 1 || d < 1 || t < 1 || e < 1 || c < 1 || microbatch_size < 0) {
      fail(ErrorKind::InvalidArgument, "manual strategy fields must be positive");
    }
    cfg->run.manual = s;
  });
}

tp_status tp_plan(const tp_model* model, const tp_topology* topo, const tp_config* cfg, tp_report** out) {
  return guarded([&] {
    require(model, "model");
    require(topo, "topology");
    require(cfg, "config");
    require(out, "out");
    *out = nullptr;
    PlanResult r = plan(model->graph, topo->matrix, cfg->run.space);
    if (!r.best) fail(ErrorKind::Infeasible, r.failure_summary());
    *out = new tp_report{std::move(r)};
  });
}

tp_status tp_report_plan_json(const tp_report* report, char** out) {
  return guarded([&] {
    require(report, "report");
    require(out, "out");
    *out = dup_string(plan_to_json(report->result));
  });
}

tp_status tp_report_csv(const tp_report* report, char** out) {
  return guarded([&] {
    require(report, "report");
    require(out, "out");
    *out = dup_string(report_csv(report->result));
  });
}

tp_status tp_report_strategy(const tp_report* report, char** out) {
  return guarded([&] {
    require(report, "report");
    require(out, "out");
    *out = dup_string(strategy_tuple(*report->result.best));
  });
}

double tp_report_t_batch(const tp_report* report) {
  return report && report->result.best ? report->result.best->t_batch : -1.0;
}

int tp_report_devices_used(const tp_report* report) {
  return report && report->result.best ? report->result.best->d * report->result.best->pipeline_devices() : -1;
}

void tp_report_free(tp_report* report) { delete report; }

tp_status tp_compare(const tp_model* model, const tp_topology* topo, const tp_config* cfg, tp_comparison** out) {
  return guarded([&] {
    require(model, "model");
    require(topo, "topology");
    require(cfg, "config");
    require(out, "out");
    *out = new tp_comparison{run_compare(model->graph, topo->matrix, cfg->run)};
  });
}

tp_status tp_comparison_csv(const tp_comparison* cmp, char** out) {
  return guarded([&] {
    require(cmp, "comparison");
    require(out, "out");
    *out = dup_string(comparison_csv(cmp->cmp));
  });
}

tp_status tp_comparison_plot_csv(const tp_comparison* cmp, char** out) {
  return guarded([&] {
    require(cmp, "comparison");
    require(out, "out");
    *out = dup_string(plot_csv(cmp->cmp));
  });
}

void tp_comparison_free(tp_comparison* cmp) { delete cmp; }

tp_status tp_plan_rescore(const tp_model* model, const tp_topology* topo, const char* plan_json, double* out) {
  return guarded([&] {
    require(model, "model");
    require(topo, "topology");
    require(plan_json, "plan_json");
    require(out, "out");
    *out = rescore_plan(plan_from_json(plan_json), model->graph, topo->matrix);
  });
}

tp_status tp_oracle_check(int count, uint64_t seed, double perturb, int with_baselines, char** table,
                          int* failures) {
  return guarded([&] {
    require(table, "table");
    require(failures, "failures");
    if (count < 1) fail(ErrorKind::InvalidArgument, "count must be >= 1");
    CheckOptions opt;
    opt.count = count;
    opt.seed = seed;
    opt.perturb = perturb;
    opt.baselines = with_baselines != 0;
    const auto rows = oracle_check(opt);
    int bad = 0;
    for (const auto& r : rows) bad += r.pass() ? 0 : 1;
    *failures = bad;
    *table = dup_string(format_check_table(rows));
  });
}

}  // extern "C"
