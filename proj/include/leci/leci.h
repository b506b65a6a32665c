/* Copyright 2026 The LECI Graph Authors. Apache 2.0 License.
 *
 * C interface to the leci library. All objects are opaque handles; every
 * fallible call returns a leci_status and leaves a message retrievable with
 * leci_last_error() on the calling thread. Strings returned through char**
 * out-parameters are owned by the caller and released with leci_string_free.
 */
#ifndef LECI_LECI_H_
#define LECI_LECI_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define LECI_API __declspec(dllexport)
#else
#define LECI_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Values double as CLI exit codes. */
typedef enum leci_status {
  LECI_OK = 0,
  LECI_ERR_INTERNAL = 1,
  LECI_ERR_CONFIG = 2,   /* bad configuration, missing or malformed input */
  LECI_ERR_NUMERIC = 3,  /* non-finite loss during training */
  LECI_ERR_ORACLE = 4,   /* oracle found a counterexample */
  LECI_ERR_ARGUMENT = 5  /* null handle or contract violation */
} leci_status;

typedef struct leci_config leci_config;
typedef struct leci_dataset leci_dataset;
typedef struct leci_model leci_model;

LECI_API const char* leci_version(void);
/* Message of the last failed call on this thread; "" when none. */
LECI_API const char* leci_last_error(void);
LECI_API void leci_string_free(char* s);

/* ---- run configuration ------------------------------------------------ */

LECI_API leci_status leci_config_new(leci_config** out);
LECI_API leci_status leci_config_load(const char* path, leci_config** out);
LECI_API leci_status leci_config_parse(const char* text, leci_config** out);
/* Sets `key` (or `sweep.<key>`); unknown keys fail with LECI_ERR_CONFIG. */
LECI_API leci_status leci_config_set(leci_config* cfg, const char* key, const char* value);
/* Resolved value of one key. */
LECI_API leci_status leci_config_get(const leci_config* cfg, const char* key, char** out);
/* Resolved `key = value` echo of every key. */
LECI_API leci_status leci_config_echo(const leci_config* cfg, char** out);
LECI_API leci_status leci_config_validate(const leci_config* cfg);
LECI_API void leci_config_free(leci_config* cfg);

/* ---- datasets ---------------------------------------------------------- */

LECI_API leci_status leci_dataset_generate(const leci_config* cfg, leci_dataset** out);
LECI_API leci_status leci_dataset_load(const char* dir, leci_dataset** out);
LECI_API leci_status leci_dataset_save(const leci_dataset* data, const char* dir);
/* split is one of train, id_val, ood_val, ood_test. */
LECI_API leci_status leci_dataset_size(const leci_dataset* data, const char* split,
                                       size_t* out);
LECI_API void leci_dataset_free(leci_dataset* data);

/* ---- models ------------------------------------------------------------ */

/* Trains one seed (cfg's `seed`) with cfg's `method`; the returned model
 * holds the final-epoch parameters. Per-epoch logs go to *logs_jsonl when
 * logs_jsonl is non-null. */
LECI_API leci_status leci_model_train(const leci_config* cfg, const leci_dataset* data,
                                      leci_model** out, char** logs_jsonl);
LECI_API leci_status leci_model_load(const char* path, leci_model** out);
LECI_API leci_status leci_model_save(const leci_model* model, const char* path);
LECI_API leci_status leci_model_method(const leci_model* model, char** out);
LECI_API leci_status leci_model_accuracy(const leci_model* model, const leci_dataset* data,
                                         const char* split, double* out);
/* Selection probabilities of graph `index` of `split`. Writes up to `cap`
 * values and the edge count to *count. Fails for models without a selector. */
LECI_API leci_status leci_model_edge_probs(const leci_model* model,
                                           const leci_dataset* data, const char* split,
                                           size_t index, double* probs, size_t cap,
                                           size_t* count);
/* MetricsReport JSON over all splits; probes when run_probes != 0. */
LECI_API leci_status leci_model_evaluate(const leci_model* model, const leci_dataset* data,
                                         int run_probes, char** report_json);
LECI_API void leci_model_free(leci_model* model);

/* ---- commands (fixed output layouts under out_dir) --------------------- */

LECI_API leci_status leci_run_gen(const leci_config* cfg, const char* out_dir);
/* Messages per epoch are passed to `log` when non-null. */
typedef void (*leci_log_fn)(const char* line, void* user);
LECI_API leci_status leci_run_train(const leci_config* cfg, const char* data_dir,
                                    const char* out_dir, leci_log_fn log, void* user,
                                    char** report_json);
LECI_API leci_status leci_run_eval(const char* model_path, const char* data_dir,
                                   int run_probes, char** report_json);
/* Exactly one of has_threshold / has_top_k must be nonzero. */
LECI_API leci_status leci_run_explain(const char* model_path, const char* data_dir,
                                      const char* split, const size_t* graph_ids,
                                      size_t num_ids, int has_threshold, double threshold,
                                      int has_top_k, size_t top_k, const char* out_dir,
                                      char** report_json);
/* Returns LECI_ERR_ORACLE (with the report still filled) on counterexamples. */
LECI_API leci_status leci_run_oracle(char** report_json);
LECI_API leci_status leci_run_sweep(const leci_config* cfg, const char* data_dir,
                                    const char* out_dir, unsigned jobs, leci_log_fn log,
                                    void* user, char** ranking_json);

#ifdef __cplusplus
}
#endif

#endif /* LECI_LECI_H_ */
