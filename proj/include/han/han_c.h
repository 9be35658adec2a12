/* C API for the hannet library.
 *
 * All functions return a hannet_status (HANNET_OK on success); on failure
 * hannet_last_error() yields a thread-local message describing what went
 * wrong. Objects are opaque handles released with the matching _free
 * function. Strings returned through char** out-parameters are owned by the
 * caller and released with hannet_string_free().
 */

#ifndef HANNET_HAN_C_H
#define HANNET_HAN_C_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef int32_t hannet_status;

enum {
    HANNET_OK = 0,
    HANNET_ERROR_INVALID_ARGUMENT = 1,
    HANNET_ERROR_DIMENSION_MISMATCH = 2,
    HANNET_ERROR_DEGENERATE_REFLECTOR = 3,
    HANNET_ERROR_PARSE = 4,
    HANNET_ERROR_IO = 5,
    HANNET_ERROR_UNKNOWN_NAME = 6,
    HANNET_ERROR_DIVERGED = 7,
    HANNET_ERROR_UNSUPPORTED = 8,
    HANNET_ERROR_INTERNAL = 9
};

typedef struct hannet_model hannet_model;
typedef struct hannet_dataset hannet_dataset;

/* Library version string, e.g. "0.1.0". */
const char* hannet_version(void);

/* Message for the most recent failure on this thread ("" if none). */
const char* hannet_last_error(void);

/* Release a string returned by this API. NULL is allowed. */
void hannet_string_free(char* s);

/* ------------------------------------------------------------------ */
/* Models */

/* Build a catalog architecture (e.g. "checkerboard-HanNet",
 * "regression-FCNet1"); parameters are drawn from `seed`. */
hannet_status hannet_model_build(const char* name, int32_t input_dim, int32_t output_dim,
                                 uint64_t seed, hannet_model** out_model);

hannet_status hannet_model_from_json(const char* json_text, hannet_model** out_model);
hannet_status hannet_model_to_json(const hannet_model* model, char** out_text);
hannet_status hannet_model_save(const hannet_model* model, const char* path);
hannet_status hannet_model_load(const char* path, hannet_model** out_model);
void hannet_model_free(hannet_model* model);

int64_t hannet_model_input_dim(const hannet_model* model);
int64_t hannet_model_output_dim(const hannet_model* model);
int64_t hannet_model_param_count(const hannet_model* model);
double hannet_model_activation_ratio(const hannet_model* model);

/* y_out must hold output_dim doubles. */
hannet_status hannet_model_forward(const hannet_model* model, const double* x, int64_t x_len,
                                   double* y_out, int64_t y_len);

/* ------------------------------------------------------------------ */
/* Datasets */

/* Checkerboard mesh dataset: grid_points^2 samples over [-1,1]^2 labelled
 * by block parity, split by train_fraction, with label_flip_fraction of the
 * training labels inverted. */
hannet_status hannet_dataset_checkerboard(int32_t blocks, int32_t grid_points,
                                          double train_fraction, double label_flip_fraction,
                                          uint64_t seed, hannet_dataset** out_dataset);

/* Headerless numeric CSV, one sample per row; target_column < 0 selects the
 * last column. The split is seeded and features/targets are z-scored with
 * training statistics. */
hannet_status hannet_dataset_from_csv(const char* path, int32_t target_column,
                                      double train_fraction, uint64_t seed,
                                      hannet_dataset** out_dataset);

void hannet_dataset_free(hannet_dataset* dataset);

int64_t hannet_dataset_train_count(const hannet_dataset* dataset);
int64_t hannet_dataset_test_count(const hannet_dataset* dataset);
int64_t hannet_dataset_feature_dim(const hannet_dataset* dataset);
int64_t hannet_dataset_target_dim(const hannet_dataset* dataset);

/* ------------------------------------------------------------------ */
/* Training and analysis */

/* Train the model in place. train_config_json schema (docs/formats.md):
 *   {"optimizer": {"kind": "sgd"|"adam", ...}, "loss": "mse"|"cross_entropy",
 *    "metric": "accuracy"|"nrmse", "eval_every": N, "shuffle_seed": N}
 * Returns the run record as JSON text in out_record_json (optional). */
hannet_status hannet_train(hannet_model* model, const hannet_dataset* dataset,
                           const char* train_config_json, char** out_record_json);

/* Orthogonality certificate of the layer-Jacobian product over `trials`
 * random inputs (requires every hidden layer to be a Householder layer).
 * Returns {"depth", "orspan", "sigma_min", "sigma_max"} as JSON. */
hannet_status hannet_orthogonality_certificate(const hannet_model* model, int32_t trials,
                                               uint64_t seed, char** out_report_json);

/* ------------------------------------------------------------------ */
/* Experiments and verification */

/* Run one experiment from a JSON config (schema in docs/formats.md);
 * writes the results bundle to config.out_dir and returns the summary
 * document. */
hannet_status hannet_experiment_run(const char* config_json, char** out_summary_json);

/* Run the property suite. out_all_passed receives 1/0; the report JSON
 * lists every property with pass/fail and detail. */
hannet_status hannet_verify_run(int32_t* out_all_passed, char** out_report_json);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* HANNET_HAN_C_H */
