#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "topoplan/topoplan.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitInfeasible = 1;
constexpr int kExitError = 2;

struct CliError {
  tp_status status;
  std::string message;
};

void check(tp_status s) {
  if (s != TP_OK) throw CliError{s, tp_last_error()};
}

struct ModelDel {
  void operator()(tp_model* p) const { tp_model_free(p); }
};
struct TopoDel {
  void operator()(tp_topology* p) const { tp_topology_free(p); }
};
struct ConfigDel {
  void operator()(tp_config* p) const { tp_config_free(p); }
};
struct ReportDel {
  void operator()(tp_report* p) const { tp_report_free(p); }
};
struct CmpDel {
  void operator()(tp_comparison* p) const { tp_comparison_free(p); }
};

std::string take(char* s) {
  std::string out(s ? s : "");
  tp_string_free(s);
  return out;
}

std::unique_ptr<tp_model, ModelDel> open_model(const std::string& spec) {
  tp_model* m = nullptr;
  const std::string prefix = "synthetic:";
  if (spec.rfind(prefix, 0) == 0) {
    check(tp_model_synthetic(spec.substr(prefix.size()).c_str(), &m));
  } else {
    check(tp_model_load(spec.c_str(), &m));
  }
  return std::unique_ptr<tp_model, ModelDel>(m);
}

std::unique_ptr<tp_topology, TopoDel> open_topology(const std::string& path) {
  tp_topology* t = nullptr;
  check(tp_topology_load(path.c_str(), &t));
  return std::unique_ptr<tp_topology, TopoDel>(t);
}

// Outputs are rendered in memory first so a failure never leaves partial files.
void write_outputs(const std::string& dir, const std::vector<std::pair<std::string, std::string>>& files) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw CliError{TP_ERR_IO, "cannot create output directory '" + dir + "': " + ec.message()};
  for (const auto& [name, body] : files) {
    const fs::path path = fs::path(dir) / name;
    const fs::path tmp = fs::path(dir) / (name + ".tmp");
    {
      std::ofstream out(tmp, std::ios::binary);
      out << body;
      if (!out) throw CliError{TP_ERR_IO, "cannot write '" + tmp.string() + "'"};
    }
    fs::rename(tmp, path, ec);
    if (ec) throw CliError{TP_ERR_IO, "cannot write '" + path.string() + "': " + ec.message()};
  }
}

void write_file(const std::string& path, const std::string& body) {
  const fs::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
  }
  std::ofstream out(p, std::ios::binary);
  out << body;
  if (!out) throw CliError{TP_ERR_IO, "cannot write '" + path + "'"};
}

struct Options {
  std::string model;
  std::string topology;
  double budget = 80e9;
  int devices = 0;
  std::vector<int> microbatch_sizes;
  std::vector<int> replication;
  std::vector<int> stage_replicas;
  int max_stages = 16;
  std::string algorithms = "nest,flat_dp,mcmc,manual";
  std::vector<int> manual;
  bool manual_seq = false;
  int manual_mbs = 0;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  bool no_mem = false;
  bool no_zero = false;
  bool recompute_first = false;
  int threads = 1;
  int mcmc_iterations = 5000;
  int mcmc_restarts = 10;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--model", o.model, "Model profile JSON, or synthetic:<name>")->required();
  cmd->add_option("--topology", o.topology, "Topology JSON file")->required();
  cmd->add_option("--budget-bytes", o.budget, "Per-device memory budget in bytes")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--devices", o.devices, "Devices to use (default: all in the topology)")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--microbatch-sizes", o.microbatch_sizes, "Comma separated microbatch sizes")->delimiter(',');
  cmd->add_option("--replication", o.replication, "Comma separated data-parallel degrees")->delimiter(',');
  cmd->add_option("--stage-replicas", o.stage_replicas, "Comma separated per-stage replica counts")
      ->delimiter(',');
  cmd->add_option("--max-stages", o.max_stages, "Upper bound on pipeline depth")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", o.seed, "Seed for every randomized component");
  cmd->add_option("--out-dir", o.out_dir, "Directory for output files");
  cmd->add_flag("--no-mem", o.no_mem, "Ignore the memory budget during search");
  cmd->add_flag("--no-zero", o.no_zero, "Disable ZeRO sharding");
  cmd->add_flag("--recompute-first", o.recompute_first, "Prefer recomputation over ZeRO when relieving memory");
  cmd->add_option("--threads", o.threads, "Worker threads for the DP fill")->check(CLI::PositiveNumber);
}

std::unique_ptr<tp_config, ConfigDel> make_config(const Options& o) {
  std::unique_ptr<tp_config, ConfigDel> cfg(tp_config_create());
  if (!cfg) throw CliError{TP_ERR_INTERNAL, tp_last_error()};
  tp_config* c = cfg.get();
  check(tp_config_set_budget_bytes(c, o.budget));
  check(tp_config_set_devices(c, o.devices));
  if (!o.microbatch_sizes.empty()) {
    check(tp_config_set_microbatch_sizes(c, o.microbatch_sizes.data(), o.microbatch_sizes.size()));
  }
  if (!o.replication.empty()) check(tp_config_set_replication(c, o.replication.data(), o.replication.size()));
  if (!o.stage_replicas.empty()) {
    check(tp_config_set_stage_replicas(c, o.stage_replicas.data(), o.stage_replicas.size()));
  }
  check(tp_config_set_max_stages(c, o.max_stages));
  check(tp_config_set_ignore_memory(c, o.no_mem ? 1 : 0));
  check(tp_config_set_allow_zero(c, o.no_zero ? 0 : 1));
  check(tp_config_set_recompute_first(c, o.recompute_first ? 1 : 0));
  check(tp_config_set_threads(c, o.threads));
  check(tp_config_set_seed(c, o.seed));
  check(tp_config_set_mcmc(c, o.mcmc_iterations, o.mcmc_restarts));
  check(tp_config_set_algorithms(c, o.algorithms.c_str()));
  if (!o.manual.empty()) {
    if (o.manual.size() != 5) {
      throw CliError{TP_ERR_INVALID_ARGUMENT, "--manual-strategy expects five integers p,d,t,e,c"};
    }
    const auto& m = o.manual;
    check(tp_config_set_manual(c, m[0], m[1], m[2], m[3], m[4], o.manual_seq ? 1 : 0, o.manual_mbs, 0));
  }
  return cfg;
}

int cmd_plan(const Options& o) {
  auto model = open_model(o.model);
  auto topo = open_topology(o.topology);
  auto cfg = make_config(o);
  tp_report* raw = nullptr;
  const tp_status s = tp_plan(model.get(), topo.get(), cfg.get(), &raw);
  if (s == TP_ERR_INFEASIBLE) {
    std::cerr << tp_last_error() << "\n";
    return kExitInfeasible;
  }
  check(s);
  std::unique_ptr<tp_report, ReportDel> report(raw);
  char* text = nullptr;
  check(tp_report_plan_json(report.get(), &text));
  const std::string plan_json = take(text);
  check(tp_report_csv(report.get(), &text));
  const std::string csv = take(text);
  check(tp_report_strategy(report.get(), &text));
  const std::string strategy = take(text);
  write_outputs(o.out_dir, {{"plan.json", plan_json}, {"report.csv", csv}});
  char tb[64];
  std::snprintf(tb, sizeof tb, "%.6g", tp_report_t_batch(report.get()));
  std::cout << strategy << "  devices=" << tp_report_devices_used(report.get()) << "  t_batch=" << tb << " s\n";
  return 0;
}

int cmd_compare(const Options& o) {
  auto model = open_model(o.model);
  auto topo = open_topology(o.topology);
  auto cfg = make_config(o);
  tp_comparison* raw = nullptr;
  check(tp_compare(model.get(), topo.get(), cfg.get(), &raw));
  std::unique_ptr<tp_comparison, CmpDel> cmp(raw);
  char* text = nullptr;
  check(tp_comparison_csv(cmp.get(), &text));
  const std::string csv = take(text);
  check(tp_comparison_plot_csv(cmp.get(), &text));
  const std::string plot = take(text);
  write_outputs(o.out_dir, {{"compare.csv", csv}, {"plot.csv", plot}});
  std::cout << plot;
  return 0;
}

int cmd_topo_gen(const std::string& kind, const std::vector<std::string>& params, const std::string& out) {
  std::ostringstream js;
  js << "{";
  bool first = true;
  for (const auto& p : params) {
    const auto eq = p.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw CliError{TP_ERR_INVALID_ARGUMENT, "generator parameter '" + p + "' is not key=value"};
    }
    const std::string key = p.substr(0, eq);
    const std::string value = p.substr(eq + 1);
    double v = 0.0;
    try {
      std::size_t used = 0;
      v = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
    } catch (const std::exception&) {
      throw CliError{TP_ERR_INVALID_ARGUMENT, "generator parameter '" + key + "' needs a number, got '" + value + "'"};
    }
    char num[64];
    std::snprintf(num, sizeof num, "%.17g", v);
    js << (first ? "" : ",") << "\"" << key << "\":" << num;
    first = false;
  }
  js << "}";
  tp_topology* raw = nullptr;
  check(tp_topology_generate(kind.c_str(), js.str().c_str(), &raw));
  std::unique_ptr<tp_topology, TopoDel> topo(raw);
  char* text = nullptr;
  check(tp_topology_to_json(topo.get(), &text));
  const std::string body = take(text);
  if (out.empty()) {
    std::cout << body;
  } else {
    write_file(out, body);
  }
  return 0;
}

int cmd_model_gen(const std::string& name, const std::string& out) {
  tp_model* raw = nullptr;
  check(tp_model_synthetic(name.c_str(), &raw));
  std::unique_ptr<tp_model, ModelDel> model(raw);
  char* text = nullptr;
  check(tp_model_to_json(model.get(), &text));
  const std::string body = take(text);
  if (out.empty()) {
    std::cout << body;
  } else {
    write_file(out, body);
  }
  return 0;
}

int cmd_oracle_check(int count, std::uint64_t seed, double perturb, bool baselines) {
  char* table = nullptr;
  int failures = 0;
  check(tp_oracle_check(count, seed, perturb, baselines ? 1 : 0, &table, &failures));
  std::cout << take(table);
  std::cout << (failures == 0 ? "PASS" : "FAIL") << ": " << (count - failures) << "/" << count
            << " instances\n";
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Topology-aware placement planner for hybrid-parallel training"};
  app.require_subcommand(1);

  Options po;
  auto* plan = app.add_subcommand("plan", "Search for the fastest placement and write plan.json and report.csv");
  add_common(plan, po);

  Options co;
  auto* compare = app.add_subcommand("compare", "Run several planners and write compare.csv and plot.csv");
  add_common(compare, co);
  compare->add_option("--algorithms", co.algorithms, "Comma separated subset of nest,flat_dp,mcmc,manual");
  compare->add_option("--manual-strategy", co.manual, "Manual baseline as p,d,t,e,c")->delimiter(',');
  compare->add_flag("--manual-seq", co.manual_seq, "Manual baseline uses sequence parallelism");
  compare->add_option("--manual-microbatch", co.manual_mbs, "Manual baseline microbatch size");
  compare->add_option("--mcmc-iterations", co.mcmc_iterations, "Proposals per MCMC restart")
      ->check(CLI::PositiveNumber);
  compare->add_option("--mcmc-restarts", co.mcmc_restarts, "Independent MCMC chains")->check(CLI::PositiveNumber);

  std::string topo_kind, topo_out;
  std::vector<std::string> topo_params;
  auto* topo_gen = app.add_subcommand("topo-gen", "Write a generated topology file");
  topo_gen->add_option("kind", topo_kind, "hgx_node, fat_tree, spine_leaf or torus")->required();
  topo_gen->add_option("--param", topo_params, "Generator parameter key=value (repeatable)");
  topo_gen->add_option("--out", topo_out, "Output path (default: stdout)");

  std::string model_name, model_out;
  auto* model_gen = app.add_subcommand("model-gen", "Write a synthetic model profile");
  model_gen->add_option("name", model_name, "llama3_70b, gpt3_175b, bert_large or uniform24")->required();
  model_gen->add_option("--out", model_out, "Output path (default: stdout)");

  int check_count = 100;
  std::uint64_t check_seed = 0;
  double check_perturb = 0.0;
  bool check_no_baselines = false;
  auto* oracle = app.add_subcommand("oracle-check", "Compare the solver with exhaustive search on random instances");
  oracle->add_option("--count", check_count, "Number of instances")->check(CLI::PositiveNumber);
  oracle->add_option("--seed", check_seed, "First instance seed");
  oracle->add_option("--perturb", check_perturb, "Scale the solver's link costs by 1+x (negative control)");
  oracle->add_flag("--no-baselines", check_no_baselines, "Skip the flat and MCMC dominance checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*plan) return cmd_plan(po);
    if (*compare) return cmd_compare(co);
    if (*topo_gen) return cmd_topo_gen(topo_kind, topo_params, topo_out);
    if (*model_gen) return cmd_model_gen(model_name, model_out);
    if (*oracle) return cmd_oracle_check(check_count, check_seed, check_perturb, !check_no_baselines);
  } catch (const CliError& e) {
    std::cerr << "error (" << tp_status_name(e.status) << "): " << e.message << "\n";
    return e.status == TP_ERR_INFEASIBLE ? kExitInfeasible : kExitError;
  }
  return kExitError;
}
