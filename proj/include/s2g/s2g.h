/*
 * s2g: speech to gesture properties and conditioned poses.
 *
 * Conventions
 *   - Every fallible call returns an s2g_status; on failure the message is
 *     available from s2g_last_error() on the same thread.
 *   - Handles are opaque and released with their *_free function; passing
 *     NULL to a free function is a no-op.
 *   - Strings returned through char** are heap-allocated and must be released
 *     with s2g_string_free.
 *   - config_json arguments take a configuration document (see README); NULL
 *     or "" selects the defaults.
 *   - cache_dir arguments may be NULL to disable the feature cache.
 */
#ifndef S2G_S2G_H
#define S2G_S2G_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define S2G_API __declspec(dllexport)
#else
#define S2G_API __attribute__((visibility("default")))
#endif

typedef enum s2g_status {
  S2G_OK = 0,
  S2G_E_INVALID_ARGUMENT = 1, /* caller misuse or bad configuration */
  S2G_E_IO = 2,               /* missing or unwritable file */
  S2G_E_PARSE = 3,            /* malformed file contents */
  S2G_E_DATA = 4,             /* recoverable problem with input data */
  S2G_E_INCOMPATIBLE = 5,     /* checkpoint or cache does not match */
  S2G_E_NUMERIC = 6,          /* divergence or overflow */
  S2G_E_INTERNAL = 7
} s2g_status;

S2G_API const char* s2g_last_error(void);
S2G_API const char* s2g_version(void);
S2G_API const char* s2g_status_name(s2g_status status);
S2G_API void s2g_string_free(char* s);

/* Resolved configuration (defaults filled in) and its hash. */
S2G_API s2g_status s2g_config_resolve(const char* config_json, char** resolved_json, char** hash);
S2G_API s2g_status s2g_file_hash(const char* path, char** hash);
S2G_API s2g_status s2g_string_hash(const char* text, char** hash);

/* ---- corpus ------------------------------------------------------------ */

typedef struct s2g_corpus s2g_corpus;

/* Loads a corpus directory. Recordings that fail validation are skipped and
 * described in *issues_json (a JSON array of {recording_id, field, message});
 * issues_json may be NULL. */
S2G_API s2g_status s2g_corpus_load(const char* dir, s2g_corpus** out, char** issues_json);
/* spec_json: the "synth" section of a configuration document. */
S2G_API s2g_status s2g_corpus_synthesize(const char* spec_json, s2g_corpus** out);
S2G_API s2g_status s2g_corpus_save(const s2g_corpus* corpus, const char* dir);
S2G_API size_t s2g_corpus_size(const s2g_corpus* corpus);
S2G_API s2g_status s2g_corpus_recording_id(const s2g_corpus* corpus, size_t index, char** id);
/* scope: "all" or "gesture". Writes a JSON object label -> fraction. */
S2G_API s2g_status s2g_corpus_prevalence(const s2g_corpus* corpus, const char* scope, char** out_json);
S2G_API void s2g_corpus_free(s2g_corpus* corpus);

/* Extracts features of every recording into cache_dir. Writes a JSON array of
 * {recording_id, path, n_frames, hash}. */
S2G_API s2g_status s2g_features_build_cache(const s2g_corpus* corpus, const char* config_json,
                                            const char* cache_dir, char** out_json);

/* ---- tier classifiers --------------------------------------------------- */

typedef struct s2g_classifier s2g_classifier;

/* tier: "existence", "category", "semantics" or "phase". log_jsonl may be NULL. */
S2G_API s2g_status s2g_classifier_train(const s2g_corpus* corpus, const char* tier, const char* config_json,
                                        const char* cache_dir, s2g_classifier** out, char** log_jsonl);
S2G_API s2g_status s2g_classifier_save(const s2g_classifier* model, const char* path);
S2G_API s2g_status s2g_classifier_load(const char* path, s2g_classifier** out);
/* {tier, labels, spec, window, d_in, spec_hash, n_params} */
S2G_API s2g_status s2g_classifier_info(const s2g_classifier* model, char** out_json);
/* Per-frame probabilities for one recording: {"labels": [...], "probs": [[...], ...]}. */
S2G_API s2g_status s2g_classifier_predict(const s2g_classifier* model, const s2g_corpus* corpus, size_t index,
                                          const char* config_json, char** out_json);
S2G_API void s2g_classifier_free(s2g_classifier* model);

/* ---- evaluation --------------------------------------------------------- */

/* Speaker-disjoint k-fold cross-validation of one tier. report_json receives
 * a report document; folds_json (may be NULL) the per-fold details. */
S2G_API s2g_status s2g_cross_validate(const s2g_corpus* corpus, const char* tier, const char* config_json,
                                      const char* cache_dir, char** report_json, char** folds_json);

/* Prevalence-matched random guessing with labels drawn at the same prevalence. */
S2G_API s2g_status s2g_random_baseline(double prevalence, size_t n_frames, size_t n_trials, uint64_t seed,
                                       double* f1_mean, double* f1_std, double* macro_f1_mean,
                                       double* macro_f1_std);

/* Renders a report document as a text table. */
S2G_API s2g_status s2g_report_render(const char* report_json, char** text);

/* ---- pose flow ---------------------------------------------------------- */

typedef struct s2g_flow s2g_flow;

/* Trains on poses[n * d_pose] with conditioning cond[n * d_cond]. */
S2G_API s2g_status s2g_flow_train(const double* poses, const double* cond, size_t n, const char* config_json,
                                  s2g_flow** out, char** log_jsonl);
/* Trains on synthetic poses planted on the gesture frames of a corpus. */
S2G_API s2g_status s2g_flow_train_planted(const s2g_corpus* corpus, const char* config_json,
                                          const char* cache_dir, s2g_flow** out, char** log_jsonl);
S2G_API s2g_status s2g_flow_save(const s2g_flow* flow, const char* path);
S2G_API s2g_status s2g_flow_load(const char* path, s2g_flow** out);
/* {spec, spec_hash, n_params} */
S2G_API s2g_status s2g_flow_info(const s2g_flow* flow, char** out_json);
/* out receives n * d_pose values. */
S2G_API s2g_status s2g_flow_sample(const s2g_flow* flow, const double* cond, size_t d_cond, size_t n,
                                   uint64_t seed, double* out);
S2G_API s2g_status s2g_flow_log_likelihood(const s2g_flow* flow, const double* pose, size_t d_pose,
                                           const double* cond, size_t d_cond, double* out);
S2G_API void s2g_flow_free(s2g_flow* flow);

/* ---- pipeline ----------------------------------------------------------- */

/* Runs the full pipeline on one recording using the checkpoints named in the
 * configuration's pipeline section. frames_jsonl receives one JSON object per
 * frame; gesture_frequency may be NULL. */
S2G_API s2g_status s2g_pipeline_run(const s2g_corpus* corpus, size_t index, const char* config_json,
                                    char** frames_jsonl, double* gesture_frequency);

#ifdef __cplusplus
}
#endif

#endif /* S2G_S2G_H */
