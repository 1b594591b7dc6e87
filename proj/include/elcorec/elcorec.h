/* C interface to the elcorec recommendation pipeline.
 *
 * Every function returns an elc_status. On failure the message of the most
 * recent error on the calling thread is available from elc_last_error().
 * Strings returned through char** out-parameters are heap-allocated and must
 * be released with elc_free_string(). Handles are released with the matching
 * *_free function; passing NULL to any *_free is a no-op.
 */
#ifndef ELCOREC_ELCOREC_H
#define ELCOREC_ELCOREC_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define ELC_API __declspec(dllexport)
#else
#define ELC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum elc_status {
  ELC_OK = 0,
  ELC_ERR_INVALID_ARGUMENT = 1,
  ELC_ERR_IO = 2,
  ELC_ERR_FORMAT = 3,
  ELC_ERR_DOMAIN = 4,
  ELC_ERR_DIMENSION = 5,
  ELC_ERR_LOOKUP = 6,
  ELC_ERR_REFERENTIAL = 7,
  ELC_ERR_DEGENERATE_SPLIT = 8,
  ELC_ERR_NUMERIC = 9,
  ELC_ERR_CONSTRUCTION = 10,
  ELC_ERR_INJECTION = 11,
  ELC_ERR_STAGE = 12,
  ELC_ERR_INTERNAL = 13
} elc_status;

typedef struct elc_kb elc_kb;
typedef struct elc_gat elc_gat;
typedef struct elc_lm elc_lm;

/* Progress lines from long-running calls. */
typedef void (*elc_log_fn)(const char* line, void* user);

ELC_API const char* elc_version(void);
ELC_API const char* elc_status_name(elc_status status);
ELC_API const char* elc_last_error(void);
ELC_API void elc_free_string(char* s);
/* Process-wide; NULL disables logging. */
ELC_API void elc_set_logger(elc_log_fn fn, void* user);

/* ---- data ---------------------------------------------------------------- */

/* Writes interactions.tsv, items.tsv, users.tsv, schema.json and
 * latents.json for a planted-signal dataset. config_json may be NULL. */
ELC_API elc_status elc_synth_write(const char* config_json, const char* out_dir);

/* Loads a dataset, builds samples and writes train/valid/test.jsonl into
 * out_dir. items/users may be NULL or "". split_json: {"split": "temporal" |
 * "user", "ratios": [..], "train_ratio": .., "seed": .., "max_history": ..};
 * NULL means an 8:1:1 temporal split. Counts are written to n_out[3] when
 * non-NULL. */
ELC_API elc_status elc_make_samples(const char* interactions, const char* items, const char* users,
                                    const char* schema_path, const char* split_json, const char* out_dir,
                                    size_t n_out[3]);

/* ---- knowledge base -------------------------------------------------------- */

ELC_API elc_status elc_kb_build(const char* items_path, const char* schema_path, size_t dim, uint64_t seed,
                                elc_kb** out);
ELC_API elc_status elc_kb_load(const char* path, elc_kb** out);
ELC_API elc_status elc_kb_save(const elc_kb* kb, const char* path);
ELC_API elc_status elc_kb_size(const elc_kb* kb, size_t* n);
/* JSON array of {"item_id", "similarity", "position"}, best first. */
ELC_API elc_status elc_kb_topk(const elc_kb* kb, const char* target_id, const char* const* history,
                               size_t n_history, size_t k, char** out_json);
ELC_API void elc_kb_free(elc_kb* kb);

/* ---- prompts --------------------------------------------------------------- */

/* options_json: {"mode": "rap" | "plain", "k_ret", "k_rec", "k_plain",
 * "show_rating", "template": path}; NULL means RAP with 15 + 15 lines. */
ELC_API elc_status elc_build_prompts(const char* samples_path, const elc_kb* kb, const char* options_json,
                                     const char* out_path, size_t* n_out);

/* ---- expert network -------------------------------------------------------- */

ELC_API elc_status elc_gat_train(const char* train_samples, const char* valid_samples, const char* config_json,
                                 elc_gat** out, char** report_json);
ELC_API elc_status elc_gat_load(const char* path, elc_gat** out);
ELC_API elc_status elc_gat_save(const elc_gat* gat, const char* path);
ELC_API elc_status elc_gat_dim(const elc_gat* gat, size_t* d);
/* Target-item embeddings of every sample, stored as an [n x d] tensor. */
ELC_API elc_status elc_gat_embed(const elc_gat* gat, const char* samples_path, const char* out_path, size_t* n_out);
/* Click probabilities as scores JSONL. */
ELC_API elc_status elc_gat_predict(const elc_gat* gat, const char* samples_path, const char* scores_path,
                                   size_t* n_out);
ELC_API void elc_gat_free(elc_gat* gat);

/* ---- language model -------------------------------------------------------- */

/* gat may be NULL only when the config disables injection. */
ELC_API elc_status elc_lm_train(const char* prompts_path, const elc_gat* gat, const char* config_json, elc_lm** out,
                                char** report_json);
ELC_API elc_status elc_lm_load(const char* path, elc_lm** out);
ELC_API elc_status elc_lm_save(const elc_lm* lm, const char* path);
ELC_API elc_status elc_lm_infer(const elc_lm* lm, const elc_gat* gat, const char* prompts_path,
                                const char* scores_path, size_t* n_out);
ELC_API void elc_lm_free(elc_lm* lm);

/* ---- evaluation and experiments -------------------------------------------- */

ELC_API elc_status elc_auc(const int* labels, const double* scores, size_t n, double* out);
/* {"auc", "logloss", "acc", "n"} for a scores JSONL file. */
ELC_API elc_status elc_eval_scores(const char* scores_path, char** metrics_json);
/* Runs a whole experiment. overrides_json (may be NULL) is merged into the
 * config as a JSON merge patch. Result: {"metrics": {...}, "timing": {...}}. */
ELC_API elc_status elc_run_experiment(const char* config_path, const char* overrides_json, char** result_json);

#ifdef __cplusplus
}
#endif

#endif /* ELCOREC_ELCOREC_H */
