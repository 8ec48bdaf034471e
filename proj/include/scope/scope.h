/* Copyright (C) 2026 The scope-lab Authors
 * SPDX-License-Identifier: Apache-2.0
 */

#ifndef SCOPE_SCOPE_H_
#define SCOPE_SCOPE_H_

#include <stddef.h>
#include <stdint.h>

#if defined(SCOPE_BUILDING_LIBRARY)
#define SCOPE_API __attribute__((visibility("default")))
#else
#define SCOPE_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum scope_status {
  SCOPE_OK = 0,
  SCOPE_ERR_INVALID_ARGUMENT = 1,
  SCOPE_ERR_IO = 2,
  SCOPE_ERR_CONFIG_MISMATCH = 3,
  SCOPE_ERR_LENGTH_OVERFLOW = 4,
  SCOPE_ERR_NUMERIC = 5,
  SCOPE_ERR_STAGE = 6,
  SCOPE_ERR_INTERNAL = 7
} scope_status;

/* Pipeline state bound to one output directory. */
typedef struct scope_lab scope_lab;
/* A loaded checkpoint. */
typedef struct scope_model scope_model;

SCOPE_API const char* scope_version(void);
/* Message of the last failed call on this thread; empty when none. */
SCOPE_API const char* scope_last_error(void);
SCOPE_API const char* scope_status_name(scope_status status);

/* Strings returned by the library are released with scope_string_free. */
SCOPE_API void scope_string_free(char* s);

/* Default pipeline configuration as JSON. */
SCOPE_API scope_status scope_default_config(char** json_out);

/* config_json may be NULL for the defaults; keys present override them. */
SCOPE_API scope_status scope_lab_create(const char* config_json, scope_lab** out);
SCOPE_API void scope_lab_free(scope_lab* lab);
/* Effective configuration, with stage seeds resolved. */
SCOPE_API scope_status scope_lab_config(scope_lab* lab, char** json_out);

/* Stages. Each reuses a persisted artifact whose inputs are unchanged. */
SCOPE_API scope_status scope_lab_gen_corpus(scope_lab* lab);
SCOPE_API scope_status scope_lab_pretrain(scope_lab* lab);
/* which: "d1" or "full". */
SCOPE_API scope_status scope_lab_sft(scope_lab* lab, const char* which);
SCOPE_API scope_status scope_lab_gen_negatives(scope_lab* lab, double alpha);
/* regime_out (nullable) receives "degenerate", "effective" or "trivial". */
SCOPE_API scope_status scope_lab_dpo(scope_lab* lab, double alpha, double beta, char** regime_out);

/* Decodes the held-out set with a checkpoint under a strategy
 * ("plain", "cad", "pmi", "noisy") and writes JSON lines to output_path. */
SCOPE_API scope_status scope_lab_decode(scope_lab* lab, const char* checkpoint_path,
                                        const char* strategy, const char* output_path);
/* Held-out metrics of one checkpoint under a strategy, as JSON. */
SCOPE_API scope_status scope_lab_eval(scope_lab* lab, const char* checkpoint_path,
                                      const char* strategy, char** json_out);
/* Full comparison report; writes reports/eval.json and reports/eval.csv. */
SCOPE_API scope_status scope_lab_report(scope_lab* lab, char** json_out);
/* param: "alpha", "beta" or "split"; writes reports/sweep_<param>.{json,csv}. */
SCOPE_API scope_status scope_lab_sweep(scope_lab* lab, const char* param, char** json_out);

SCOPE_API scope_status scope_model_load(const char* path, scope_model** out);
SCOPE_API void scope_model_free(scope_model* model);
SCOPE_API size_t scope_model_num_parameters(const scope_model* model);
SCOPE_API int32_t scope_model_vocab_size(const scope_model* model);
/* log p(target | context) under the model. */
SCOPE_API scope_status scope_model_sequence_log_prob(const scope_model* model, const int32_t* context,
                                                     size_t context_len, const int32_t* target,
                                                     size_t target_len, double* out);

#ifdef __cplusplus
}
#endif

#endif /* SCOPE_SCOPE_H_ */
