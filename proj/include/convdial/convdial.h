#ifndef CONVDIAL_CONVDIAL_H
#define CONVDIAL_CONVDIAL_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CONVDIAL_API __declspec(dllexport)
#else
#define CONVDIAL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum convdial_status {
  CONVDIAL_OK = 0,
  CONVDIAL_ERR_INVALID_ARGUMENT = 1,
  CONVDIAL_ERR_SHAPE = 2,
  CONVDIAL_ERR_NUMERIC = 3,
  CONVDIAL_ERR_STATE = 4,
  CONVDIAL_ERR_IO = 5,
  CONVDIAL_ERR_PARSE = 6,
  CONVDIAL_ERR_CONFIG = 7,
  CONVDIAL_ERR_INTERNAL = 8
} convdial_status;

typedef enum convdial_log_level {
  CONVDIAL_LOG_ERROR = 0,
  CONVDIAL_LOG_WARN = 1,
  CONVDIAL_LOG_INFO = 2,
  CONVDIAL_LOG_DEBUG = 3
} convdial_log_level;

/* Opaque handles. */
typedef struct convdial_config convdial_config;
typedef struct convdial_model convdial_model;
typedef struct convdial_report convdial_report;

CONVDIAL_API const char* convdial_version(void);

/* Stable identifier such as "config_error" for a status code. */
CONVDIAL_API const char* convdial_status_name(convdial_status status);

/* Message of the last failure on the calling thread; "" when none. Valid
   until the next call into the library from that thread. */
CONVDIAL_API const char* convdial_last_error(void);

typedef void (*convdial_log_fn)(convdial_log_level level, const char* message, void* user);

/* Process-wide log sink. Messages above max_level are dropped. Pass a null
   function to silence logging. */
CONVDIAL_API void convdial_set_logger(convdial_log_fn fn, void* user, convdial_log_level max_level);

/* Run configuration (JSON file, format "convdial-run", version 1). */
CONVDIAL_API convdial_status convdial_config_load(const char* path, convdial_config** out);
CONVDIAL_API void convdial_config_free(convdial_config* config);
CONVDIAL_API convdial_status convdial_config_set_seed(convdial_config* config, uint64_t seed);
/* "block", "d-qa", "d-qhat-a" or "d-qhat-ahat". */
CONVDIAL_API convdial_status convdial_config_set_mode(convdial_config* config, const char* mode);
/* "elbo", "lw" or "w2v". */
CONVDIAL_API convdial_status convdial_config_set_score(convdial_config* config, const char* score);
CONVDIAL_API convdial_status convdial_config_set_output_dir(convdial_config* config, const char* dir);
/* Copies the output directory into buf (NUL-terminated). *needed receives the
   full length including the terminator; a short buffer gives
   CONVDIAL_ERR_INVALID_ARGUMENT. */
CONVDIAL_API convdial_status convdial_config_output_dir(const convdial_config* config, char* buf, size_t size,
                                                        size_t* needed);

/* Pipeline commands; each reads and writes files under the output directory. */
CONVDIAL_API convdial_status convdial_synth(const convdial_config* config);
CONVDIAL_API convdial_status convdial_train(const convdial_config* config);
/* On success *out (if non-null) receives the report; free it with
   convdial_report_free. */
CONVDIAL_API convdial_status convdial_eval(const convdial_config* config, convdial_report** out);
CONVDIAL_API convdial_status convdial_generate(const convdial_config* config);

/* Reads JSON report files and renders one comparison table. The table is
   written to out_path when it is non-null, and returned in *table_text
   (free with convdial_string_free) when table_text is non-null. */
CONVDIAL_API convdial_status convdial_render_report_table(const char* const* report_paths, size_t count,
                                                          const char* out_path, char** table_text);
CONVDIAL_API void convdial_string_free(char* text);

CONVDIAL_API convdial_status convdial_report_load(const char* path, convdial_report** out);
CONVDIAL_API void convdial_report_free(convdial_report* report);
/* Metric by name: "ce", "kld", "mr", "mrr", "r1", "r5", "r10", "sim_cq",
   "sim_dispersion". Absent metrics give CONVDIAL_ERR_STATE. */
CONVDIAL_API convdial_status convdial_report_metric(const convdial_report* report, const char* name, double* value);
/* Key-value text rendering; free with convdial_string_free. */
CONVDIAL_API convdial_status convdial_report_text(const convdial_report* report, char** text);

/* Trained model loaded from a checkpoint. */
CONVDIAL_API convdial_status convdial_model_load(const char* checkpoint_path, convdial_model** out);
CONVDIAL_API void convdial_model_free(convdial_model* model);
/* "A", "B" or "B_AR". */
CONVDIAL_API const char* convdial_model_kind(const convdial_model* model);
CONVDIAL_API size_t convdial_model_vocab_size(const convdial_model* model);
CONVDIAL_API size_t convdial_model_parameter_count(const convdial_model* model);

#ifdef __cplusplus
}
#endif

#endif
