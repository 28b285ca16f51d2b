/* C interface to the koppa continual-learning library.
 *
 * All functions return a koppa_status; on failure a thread-local message is
 * available via koppa_last_error(). Objects are opaque handles that must be
 * released with their matching _destroy/_free function.
 */
#ifndef KOPPA_CAPI_H
#define KOPPA_CAPI_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum koppa_status {
    KOPPA_OK = 0,
    KOPPA_ERR_INVALID_ARGUMENT = 1,
    KOPPA_ERR_PARSE = 2,
    KOPPA_ERR_IO = 3,
    KOPPA_ERR_NUMERICAL = 4,
    KOPPA_ERR_INTERNAL = 5
} koppa_status;

typedef struct koppa_config koppa_config;
typedef struct koppa_report koppa_report;

const char* koppa_version(void);

/* Message describing the most recent failure on this thread ("" if none). */
const char* koppa_last_error(void);

/* --- configuration ------------------------------------------------------ */

koppa_status koppa_config_default(koppa_config** out);
koppa_status koppa_config_load(const char* path, koppa_config** out);

/* Dotted-path override, e.g. "train.epochs=30" or "mode=coda". */
koppa_status koppa_config_set(koppa_config* cfg, const char* assignment);

/* Serialized JSON form; free with koppa_string_free. */
koppa_status koppa_config_to_json(const koppa_config* cfg, char** out_json);

void koppa_config_destroy(koppa_config* cfg);

/* --- running ------------------------------------------------------------ */

/* Trains the configured task sequence. out_dir may be NULL or empty for a
 * purely in-memory run; otherwise report.json, CSV matrices and per-task
 * checkpoints are written there. */
koppa_status koppa_run(const koppa_config* cfg, const char* out_dir, koppa_report** out_report);

/* Full report as JSON; free with koppa_string_free. */
koppa_status koppa_report_to_json(const koppa_report* report, char** out_json);

koppa_status koppa_report_average_accuracy(const koppa_report* report, double* out);
koppa_status koppa_report_average_forgetting(const koppa_report* report, double* out);

void koppa_report_destroy(koppa_report* report);

/* --- checkpoints -------------------------------------------------------- */

/* JSON summary of a binary checkpoint; free with koppa_string_free. */
koppa_status koppa_checkpoint_summary(const char* path, char** out_json);

void koppa_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif /* KOPPA_CAPI_H */
