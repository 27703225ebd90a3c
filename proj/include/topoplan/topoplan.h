/* C interface to the topoplan placement planner.
 *
 * Objects are opaque handles released with their *_free function. Functions
 * return a tp_status; on failure tp_last_error() describes the problem for
 * the calling thread. Strings returned through char** are heap allocated and
 * must be released with tp_string_free.
 */
#ifndef TOPOPLAN_H
#define TOPOPLAN_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define TP_API __attribute__((visibility("default")))
#else
#define TP_API
#endif

typedef enum tp_status {
  TP_OK = 0,
  TP_ERR_INVALID_ARGUMENT = 1,
  TP_ERR_PARSE = 2,
  TP_ERR_IO = 3,
  TP_ERR_INFEASIBLE = 4,
  TP_ERR_INTERNAL = 5
} tp_status;

typedef struct tp_model tp_model;
typedef struct tp_topology tp_topology;
typedef struct tp_config tp_config;
typedef struct tp_report tp_report;
typedef struct tp_comparison tp_comparison;

TP_API const char* tp_last_error(void);
TP_API const char* tp_status_name(tp_status status);
TP_API void tp_string_free(char* s);

/* Model profiles */
TP_API tp_status tp_model_load(const char* path, tp_model** out);
TP_API tp_status tp_model_from_json(const char* text, tp_model** out);
/* Named synthetic profile: llama3_70b, gpt3_175b, bert_large, uniform24. */
TP_API tp_status tp_model_synthetic(const char* name, tp_model** out);
TP_API tp_status tp_model_to_json(const tp_model* model, char** out);
TP_API int tp_model_num_layers(const tp_model* model);
TP_API void tp_model_free(tp_model* model);

/* Topologies */
TP_API tp_status tp_topology_load(const char* path, tp_topology** out);
TP_API tp_status tp_topology_from_json(const char* text, tp_topology** out);
/* kind: hgx_node, fat_tree, spine_leaf, torus. params_json: flat object of
 * numbers, or NULL for defaults. */
TP_API tp_status tp_topology_generate(const char* kind, const char* params_json, tp_topology** out);
TP_API tp_status tp_topology_to_json(const tp_topology* topo, char** out);
TP_API int tp_topology_total_devices(const tp_topology* topo);
TP_API void tp_topology_free(tp_topology* topo);

/* Run configuration */
TP_API tp_config* tp_config_create(void);
TP_API void tp_config_free(tp_config* cfg);
TP_API tp_status tp_config_set_budget_bytes(tp_config* cfg, double bytes);
TP_API tp_status tp_config_set_devices(tp_config* cfg, int devices);
TP_API tp_status tp_config_set_microbatch_sizes(tp_config* cfg, const int* sizes, size_t n);
TP_API tp_status tp_config_set_replication(tp_config* cfg, const int* degrees, size_t n);
TP_API tp_status tp_config_set_stage_replicas(tp_config* cfg, const int* counts, size_t n);
TP_API tp_status tp_config_set_max_stages(tp_config* cfg, int max_stages);
TP_API tp_status tp_config_set_threads(tp_config* cfg, int threads);
TP_API tp_status tp_config_set_ignore_memory(tp_config* cfg, int ignore);
TP_API tp_status tp_config_set_allow_zero(tp_config* cfg, int allow);
TP_API tp_status tp_config_set_recompute_first(tp_config* cfg, int recompute_first);
TP_API tp_status tp_config_set_seed(tp_config* cfg, uint64_t seed);
TP_API tp_status tp_config_set_mcmc(tp_config* cfg, int iterations, int restarts);
/* Comma separated subset of nest, flat_dp, mcmc, manual. */
TP_API tp_status tp_config_set_algorithms(tp_config* cfg, const char* csv);
/* microbatch_size 0 keeps the profile's own size. */
TP_API tp_status tp_config_set_manual(tp_config* cfg, int p, int d, int t, int e, int c, int sequence_parallel,
                                      int microbatch_size, int recompute);

/* Planning. Returns TP_ERR_INFEASIBLE (and no report) when no sweep point
 * admits a plan; tp_last_error() then lists each point's binding constraint. */
TP_API tp_status tp_plan(const tp_model* model, const tp_topology* topo, const tp_config* cfg, tp_report** out);
TP_API tp_status tp_report_plan_json(const tp_report* report, char** out);
TP_API tp_status tp_report_csv(const tp_report* report, char** out);
TP_API tp_status tp_report_strategy(const tp_report* report, char** out);
TP_API double tp_report_t_batch(const tp_report* report);
/* d x devices per pipeline actually occupied by the plan. */
TP_API int tp_report_devices_used(const tp_report* report);
TP_API void tp_report_free(tp_report* report);

TP_API tp_status tp_compare(const tp_model* model, const tp_topology* topo, const tp_config* cfg,
                            tp_comparison** out);
TP_API tp_status tp_comparison_csv(const tp_comparison* cmp, char** out);
TP_API tp_status tp_comparison_plot_csv(const tp_comparison* cmp, char** out);
TP_API void tp_comparison_free(tp_comparison* cmp);

/* Re-prices a plan document on a topology; t_batch is written to *out. */
TP_API tp_status tp_plan_rescore(const tp_model* model, const tp_topology* topo, const char* plan_json,
                                 double* out);

/* Randomized solver-versus-exhaustive-search suite. *failures receives the
 * number of failing instances and *table a printable summary. */
TP_API tp_status tp_oracle_check(int count, uint64_t seed, double perturb, int with_baselines, char** table,
                                 int* failures);

#ifdef __cplusplus
}
#endif

#endif
