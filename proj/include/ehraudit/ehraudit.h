// Copyright 2026 The EHR Audit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// C interface to the audit toolkit. Every function returns an ehra_status;
// on failure ehra_last_error() describes the error for the calling thread.
// Strings returned through char** are owned by the caller and released with
// ehra_string_free. Strings returned by const char* accessors are owned by
// the handle they came from.

#ifndef EHRAUDIT_EHRAUDIT_H_
#define EHRAUDIT_EHRAUDIT_H_

#include <stddef.h>
#include <stdint.h>

#if defined(EHRA_BUILDING_LIBRARY)
#define EHRA_API __attribute__((visibility("default")))
#else
#define EHRA_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ehra_status {
  EHRA_OK = 0,
  EHRA_ERR_INVALID_ARGUMENT = 1,
  EHRA_ERR_PARSE = 2,
  EHRA_ERR_IO = 3,
  EHRA_ERR_CAPABILITY_MISSING = 4,
  EHRA_ERR_DEGENERATE_INPUT = 5,
  EHRA_ERR_UNKNOWN_CODE = 6,
  EHRA_ERR_NUMERIC = 7,
  EHRA_ERR_PROTOCOL = 8,
  EHRA_ERR_NOT_FOUND = 9,
  EHRA_ERR_INTERNAL = 10,
} ehra_status;

typedef enum ehra_solver {
  EHRA_SOLVER_EXACT = 0,
  EHRA_SOLVER_SINKHORN = 1,
} ehra_solver;

typedef struct ehra_model ehra_model;
typedef struct ehra_result ehra_result;

EHRA_API const char* ehra_version(void);
EHRA_API const char* ehra_status_name(ehra_status status);
// Message of the last failed call on this thread; empty after a success.
EHRA_API const char* ehra_last_error(void);
EHRA_API void ehra_string_free(char* s);
// Worker count from the AUDIT_WORKERS environment variable: 1 when unset,
// -1 with ehra_last_error set when the value is not a positive integer.
EHRA_API int ehra_workers_from_env(void);

// URIs: "toy:", "toy:<json or path>", "replay:<path>", "bridge:<command>",
// "echo:<comma-separated vocabulary>". Relative paths resolve against
// base_dir, which may be NULL for the working directory.
EHRA_API ehra_status ehra_model_open(const char* uri, const char* base_dir,
                                     ehra_model** out);
EHRA_API void ehra_model_close(ehra_model* model);
EHRA_API ehra_status ehra_model_capabilities(ehra_model* model, char** json_out);
// request: {"prompt": [...], "statics": {...}, "n": int, "max_new": int,
// "mode": "sample"|"greedy", "seed": uint}. Response: {"sequences": [...]}.
EHRA_API ehra_status ehra_model_generate(ehra_model* model, const char* request_json,
                                         char** response_json);
// tokens: JSON array of wire tokens. Output: JSON array of n-1 numbers.
EHRA_API ehra_status ehra_model_logprobs(ehra_model* model, const char* tokens_json,
                                         char** logprobs_json);
EHRA_API ehra_status ehra_model_embed(ehra_model* model, const char* tokens_json,
                                      int prefix_len, char** embedding_json);

// Runs a manifest given as JSON text. Relative paths resolve against
// base_dir. Output files are written when the manifest names output_dir.
EHRA_API ehra_status ehra_run(const char* manifest_json, const char* base_dir,
                              int workers, ehra_result** out);
EHRA_API ehra_status ehra_run_file(const char* manifest_path, int workers,
                                   ehra_result** out);
// options: {"sections": [...], "seed": uint, "n_train": int, "n_test": int,
// "output_dir": str}; NULL for defaults.
EHRA_API ehra_status ehra_toy_demo(const char* options_json, int workers,
                                   ehra_result** out);

// 0 pass, 2 failed or flagged.
EHRA_API int ehra_result_exit_code(const ehra_result* result);
EHRA_API const char* ehra_result_report(const ehra_result* result);
EHRA_API size_t ehra_result_warning_count(const ehra_result* result);
EHRA_API const char* ehra_result_warning(const ehra_result* result, size_t index);
EHRA_API size_t ehra_result_file_count(const ehra_result* result);
EHRA_API const char* ehra_result_file_name(const ehra_result* result, size_t index);
EHRA_API const char* ehra_result_file_content(const ehra_result* result, size_t index);
EHRA_API ehra_status ehra_result_write(const ehra_result* result, const char* dir);
EHRA_API void ehra_result_free(ehra_result* result);

// Validation report as JSON: {"ok", "records", "train", "test", "issues"}.
EHRA_API ehra_status ehra_validate_cohort(const char* path, char** report_json,
                                          int* ok);

// Time-weighted transport distance between two token sequences given as
// JSON arrays of wire tokens.
EHRA_API ehra_status ehra_d_emd(const char* s1_json, const char* s2_json,
                                const char* embeddings_path, double lambda_per_hour,
                                ehra_solver solver, double* out);

#ifdef __cplusplus
}  // extern "C"
#endif

#endif  // EHRAUDIT_EHRAUDIT_H_
