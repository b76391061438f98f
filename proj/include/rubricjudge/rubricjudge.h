/* SPDX-License-Identifier: Apache-2.0 */
#ifndef RUBRICJUDGE_H
#define RUBRICJUDGE_H

#include <stddef.h>

#if defined(RJ_BUILDING_LIBRARY)
#define RJ_API __attribute__((visibility("default")))
#else
#define RJ_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rj_status {
  RJ_OK = 0,
  RJ_ERR_INVALID_ARGUMENT = 1,
  RJ_ERR_IO = 2,
  RJ_ERR_PARSE = 3,
  RJ_ERR_RANGE = 4,
  RJ_ERR_MISSING_FIXTURE = 5,
  RJ_ERR_TRANSIENT = 6,
  RJ_ERR_PERMANENT = 7,
  RJ_ERR_EXHAUSTED = 8,
  RJ_ERR_NON_INFORMATIVE = 9,
  RJ_ERR_NON_APPLICABLE = 10,
  RJ_ERR_OUT_OF_RANGE = 11,
  RJ_ERR_UNDEFINED = 12,
  RJ_ERR_PARTIAL_BUNDLE = 13,
  RJ_ERR_DIVERGENCE = 14,
  RJ_ERR_DATA = 15,
  RJ_ERR_INTERNAL = 99
} rj_status;

typedef struct rj_taxonomy rj_taxonomy;
typedef struct rj_backend rj_backend;

RJ_API const char* rj_version(void);
RJ_API const char* rj_status_name(rj_status status);

/* Message of the last failing call on this thread; "" when none. The
 * pointer stays valid until the next library call on the same thread. */
RJ_API const char* rj_last_error(void);

/* Frees strings returned through char** out-parameters. NULL is ignored. */
RJ_API void rj_string_free(char* s);

/* Taxonomy handles. */
RJ_API rj_taxonomy* rj_taxonomy_default(void);
RJ_API rj_status rj_taxonomy_load(const char* path, rj_taxonomy** out);
RJ_API rj_status rj_taxonomy_from_json(const char* json, rj_taxonomy** out);
RJ_API void rj_taxonomy_free(rj_taxonomy* taxonomy);
RJ_API rj_status rj_taxonomy_to_json(const rj_taxonomy* taxonomy, char** out_json);
RJ_API size_t rj_taxonomy_sub_aspect_count(const rj_taxonomy* taxonomy);
/* Writes a JSON array of violations ({field, message}); "[]" when valid. */
RJ_API rj_status rj_taxonomy_validate(const rj_taxonomy* taxonomy, char** out_json);

/* Judge backends, configured from a JSON document such as {"kind":"mock"}.
 * One backend serves every aspect. */
RJ_API rj_status rj_backend_create(const char* config_json, rj_backend** out);
RJ_API void rj_backend_free(rj_backend* backend);

/* Evaluates one sample (JSON) in "pairwise" or "single" mode and writes the
 * bundle JSON. On RJ_ERR_PARTIAL_BUNDLE the partial bundle is still written
 * to out_bundle_json. */
RJ_API rj_status rj_evaluate_sample(const rj_taxonomy* taxonomy, const rj_backend* backend, const char* sample_json,
                                    const char* mode, int workers, char** out_bundle_json);

/* Parses judge output text into a JSON array with one {sub_aspect, score,
 * rationale} per response. */
RJ_API rj_status rj_parse_judge_output(const rj_taxonomy* taxonomy, const char* text, const char* sub_aspect,
                                       const char* mode, char** out_json);

RJ_API rj_status rj_pearson(const double* xs, const double* ys, size_t n, double* out);
/* `cells` is row-major: n subjects by k raters. */
RJ_API rj_status rj_icc(const double* cells, size_t n, size_t k, double* out);

/* File-level runners. options_json configures the run; on RJ_OK the
 * summary JSON carries "exit_code" (0 success, 1 partial or data errors,
 * 3 backend exhaustion). Any other status means no work was started. */
RJ_API rj_status rj_run_evaluate(const char* options_json, char** out_summary_json);
RJ_API rj_status rj_run_prefdata(const char* options_json, char** out_summary_json);
RJ_API rj_status rj_run_train(const char* options_json, char** out_summary_json);
RJ_API rj_status rj_run_metrics(const char* options_json, char** out_summary_json);
RJ_API rj_status rj_run_bias(const char* options_json, char** out_summary_json);
RJ_API rj_status rj_run_gradcheck(const char* options_json, char** out_summary_json);

/* Log verbosity on standard error: "debug", "info", "warn", "error", "off". */
RJ_API rj_status rj_set_log_level(const char* level);

#ifdef __cplusplus
}
#endif

#endif /* RUBRICJUDGE_H */
