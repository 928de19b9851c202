/* C interface to the nodemap pipeline.
 *
 * Objects are opaque handles released with the matching *_free function.
 * Every fallible call returns an nm_status; on failure nm_last_error()
 * describes the problem (per thread, valid until the next failing call).
 * Strings copied into caller buffers are NUL-terminated; *needed receives the
 * full length including the terminator so callers can retry with more room.
 */
#ifndef NODEMAP_NODEMAP_H
#define NODEMAP_NODEMAP_H

#include <stddef.h>
#include <stdint.h>

#if defined(NODEMAP_BUILDING_LIBRARY)
#define NODEMAP_API __attribute__((visibility("default")))
#else
#define NODEMAP_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum nm_status {
  NM_OK = 0,
  NM_ERR_INPUT = 1,    /* malformed or inconsistent input */
  NM_ERR_NUMERIC = 2,  /* a numerical step failed */
  NM_ERR_IO = 3,       /* file system failure */
  NM_ERR_ARGUMENT = 4, /* null handle or invalid argument */
  NM_ERR_INTERNAL = 5
} nm_status;

typedef struct nm_config nm_config;
typedef struct nm_model nm_model;
typedef struct nm_result nm_result;

NODEMAP_API const char* nm_version(void);
NODEMAP_API const char* nm_last_error(void);

/* Configuration: starts at the built-in defaults. Values are JSON text. */
NODEMAP_API nm_status nm_config_new(nm_config** out);
NODEMAP_API void nm_config_free(nm_config* cfg);
NODEMAP_API nm_status nm_config_load(nm_config* cfg, const char* path);
NODEMAP_API nm_status nm_config_set(nm_config* cfg, const char* key, const char* json_value);
NODEMAP_API nm_status nm_config_get(const nm_config* cfg, const char* key, char* buf, size_t len, size_t* needed);
NODEMAP_API nm_status nm_config_to_json(const nm_config* cfg, char* buf, size_t len, size_t* needed);
NODEMAP_API size_t nm_config_key_count(void);
NODEMAP_API const char* nm_config_key_name(size_t index);
NODEMAP_API const char* nm_config_key_description(size_t index);
/* Name of the environment variable that may point at a default config file. */
NODEMAP_API const char* nm_config_env_var(void);

/* Training. nonnodal_csv may be NULL. With n_candidates > 0, k_ext is chosen
 * among the candidates by leave-one-site-out cross-validation. */
NODEMAP_API nm_status nm_train(const char* training_csv, const char* nonnodal_csv, const nm_config* cfg,
                               const int* k_candidates, size_t n_candidates, nm_model** out);
NODEMAP_API nm_status nm_model_load(const char* path, nm_model** out);
NODEMAP_API nm_status nm_model_save(const nm_model* model, const char* path);
NODEMAP_API void nm_model_free(nm_model* model);
NODEMAP_API int nm_model_k_ext(const nm_model* model);
NODEMAP_API size_t nm_model_grid_size(const nm_model* model);

/* Classification of one node file. */
NODEMAP_API nm_status nm_classify_file(const nm_model* model, const nm_config* cfg, const char* node_csv,
                                       int stage1_only, nm_result** out);
NODEMAP_API void nm_result_free(nm_result* result);
/* Either path may be NULL to skip that output. */
NODEMAP_API nm_status nm_result_write(const nm_result* result, const char* json_path, const char* ppm_path);
NODEMAP_API const char* nm_result_node_id(const nm_result* result);
NODEMAP_API int nm_result_is_metastatic(const nm_result* result);
NODEMAP_API double nm_result_score(const nm_result* result);
NODEMAP_API int nm_result_rows(const nm_result* result);
NODEMAP_API int nm_result_cols(const nm_result* result);
NODEMAP_API nm_status nm_result_labels(const nm_result* result, int* out, size_t len);
NODEMAP_API nm_status nm_result_met_posterior(const nm_result* result, double* out, size_t len);

/* Evaluation of every *.json result in results_dir against a truth manifest.
 * roc_csv may be NULL. */
NODEMAP_API nm_status nm_eval(const char* results_dir, const char* manifest_csv, double prevalence,
                              const char* report_json, const char* roc_csv);
NODEMAP_API nm_status nm_ppv(double sensitivity, double specificity, double prevalence, double* out);

/* Synthetic data set: train.csv, nodes/, truth/ and manifest.csv under out_dir.
 * Metastatic nodes carry one blob of min_blob..max_blob pixels; every node
 * gets `isolated` injected outlier pixels. */
NODEMAP_API nm_status nm_synth(const char* out_dir, uint64_t seed, int normal_nodes, int metastatic_nodes,
                               int min_blob, int max_blob, int isolated);

/* Grid of beta x nu (nu applied to both stages) over every node CSV in
 * nodes_dir; writes a CSV table of node-level sensitivity and specificity. */
NODEMAP_API nm_status nm_sweep(const nm_model* model, const nm_config* cfg, const char* nodes_dir,
                               const char* manifest_csv, const double* betas, size_t n_betas, const double* nus,
                               size_t n_nus, const char* out_csv);

#ifdef __cplusplus
}
#endif

#endif /* NODEMAP_NODEMAP_H */
