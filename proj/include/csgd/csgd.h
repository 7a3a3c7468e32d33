#ifndef CSGD_CSGD_H
#define CSGD_CSGD_H

#include <stddef.h>
#include <stdint.h>

#if defined(CSGD_BUILDING_LIBRARY)
#define CSGD_API __attribute__((visibility("default")))
#else
#define CSGD_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum csgd_status {
  CSGD_OK = 0,
  CSGD_ERR_INVALID_ARGUMENT = 1,
  CSGD_ERR_DIMENSION = 2,
  CSGD_ERR_NUMERIC_OVERFLOW = 3,
  CSGD_ERR_NON_CONVERGENCE = 4,
  CSGD_ERR_CONFIG = 5,
  CSGD_ERR_IO = 6,
  CSGD_ERR_DIVERGED = 7,
  CSGD_ERR_DEGENERATE_DIAGNOSTIC = 8,
  CSGD_ERR_DEGENERATE_DIRECTION = 9,
  CSGD_ERR_VERIFY_FAILED = 10,
  CSGD_ERR_INTERNAL = 11
} csgd_status;

typedef struct csgd_config csgd_config;
typedef struct csgd_session csgd_session;

/* Called with one human-readable progress line at a time. */
typedef void (*csgd_log_fn)(const char* line, void* user);
/* Called once per finished verify check; detail is a JSON object. */
typedef void (*csgd_verify_fn)(const char* name, int pass, const char* detail_json, void* user);

CSGD_API const char* csgd_version(void);
CSGD_API const char* csgd_status_name(csgd_status status);
/* Message of the last failure on the calling thread; "" when none. */
CSGD_API const char* csgd_last_error(void);
/* Frees strings returned through char** out-parameters. */
CSGD_API void csgd_string_free(char* s);

/* Configs hold the raw tree; overrides apply before validation. */
CSGD_API csgd_status csgd_config_load(const char* path, csgd_config** out);
CSGD_API csgd_status csgd_config_parse(const char* text, csgd_config** out);
/* Dotted key, value read as a YAML scalar ("engine.n_iters", "5000"). */
CSGD_API csgd_status csgd_config_set(csgd_config* cfg, const char* key, const char* value);
/* Same, but the value is always a string. */
CSGD_API csgd_status csgd_config_set_string(csgd_config* cfg, const char* key, const char* value);
CSGD_API csgd_status csgd_config_apply_full_scale(csgd_config* cfg);
/* Seed precedence: explicit (has_seed != 0) > CSGD_MASTER_SEED > config. */
CSGD_API csgd_status csgd_config_resolve_seed(csgd_config* cfg, int has_seed, uint64_t seed,
                                              uint64_t* out_seed);
CSGD_API csgd_status csgd_config_validate(const csgd_config* cfg);
/* Fully explicit effective config as JSON text. */
CSGD_API csgd_status csgd_config_to_json(const csgd_config* cfg, char** out_json);
CSGD_API void csgd_config_free(csgd_config* cfg);

/* Every controller x replication; writes the configured outputs. The
   summary JSON (may be NULL) carries counts and final errors. */
CSGD_API csgd_status csgd_compare(const csgd_config* cfg, csgd_log_fn log, void* user,
                                  char** out_summary_json);
/* One controller (NULL = the first) at one replication index. Outputs are
   written either way; returns CSGD_ERR_DIVERGED when the run diverged. */
CSGD_API csgd_status csgd_run(const csgd_config* cfg, const char* controller, uint64_t rep,
                              csgd_log_fn log, void* user, char** out_summary_json);
CSGD_API csgd_status csgd_sweep(const csgd_config* cfg, const char* knob, const double* values,
                                size_t n_values, const char* controller, csgd_log_fn log,
                                void* user);
/* Re-renders figures from a curves.csv without simulating. */
CSGD_API csgd_status csgd_plot(const char* curves_csv, const char* out_dir, int x_log,
                               csgd_log_fn log, void* user);
/* Runs the named checks (all when n_only == 0). *all_pass is set even when
   some fail; the status is CSGD_ERR_VERIFY_FAILED in that case. */
CSGD_API csgd_status csgd_verify(const char* const* only, size_t n_only, csgd_verify_fn sink,
                                 void* user, int* all_pass);
/* Newline-separated check names. */
CSGD_API csgd_status csgd_verify_names(char** out);

/* Step-by-step access to one coupled run. */
typedef struct csgd_session_state {
  uint64_t k;
  double gamma;
  double statistic;
  double err;
  double err_avg;
  double dist;
  uint32_t phase_index;
  uint64_t n_restarts;
  int diverged;
} csgd_session_state;

CSGD_API csgd_status csgd_session_create(const csgd_config* cfg, const char* controller,
                                         uint64_t rep, csgd_session** out);
/* Advances up to n_steps iterations; stops early on divergence. */
CSGD_API csgd_status csgd_session_step(csgd_session* s, uint64_t n_steps, uint64_t* k_out);
CSGD_API csgd_status csgd_session_state_get(const csgd_session* s, csgd_session_state* out);
/* which = 1 primary, 2 auxiliary. Copies min(len, d) values; *d_out = d. */
CSGD_API csgd_status csgd_session_theta(const csgd_session* s, int which, double* buf, size_t len,
                                        size_t* d_out);
CSGD_API void csgd_session_free(csgd_session* s);

/* Closed forms. */
CSGD_API csgd_status csgd_contraction_rate(double gamma, double mu, double L, double* out);
CSGD_API csgd_status csgd_varrho(double gamma, double L, double mu, double* out);
CSGD_API csgd_status csgd_theorem1_floor(double gamma, double L, double mu, uint64_t k,
                                         double* out);
CSGD_API csgd_status csgd_lemma1(double L, double mu, size_t grid_size, double* gamma0,
                                 double* k0, double* worst_margin, int* pass);
CSGD_API csgd_status csgd_ar1_stationary_error(size_t d, double gamma, double h, double c,
                                               double* out);

#ifdef __cplusplus
}
#endif

#endif
