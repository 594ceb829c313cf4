/* embinv C API: opaque handles over the embedding-inversion core.
 *
 * Every fallible function returns an embinv_status; on failure,
 * embinv_last_error() describes what went wrong (thread-local storage).
 * Handles are created by embinv_*_new/load/train functions and released with
 * the matching *_free; freeing NULL is a no-op. Strings returned through
 * char** out-parameters are owned by the caller and released with
 * embinv_string_free().
 */
#ifndef EMBINV_H
#define EMBINV_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define EMBINV_API __declspec(dllexport)
#else
#define EMBINV_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum embinv_status {
  EMBINV_OK = 0,
  EMBINV_ERR_INVALID_ARGUMENT = 1,
  EMBINV_ERR_IO = 2,
  EMBINV_ERR_REMOTE = 3,
  EMBINV_ERR_INTERNAL = 4
} embinv_status;

typedef struct embinv_lm embinv_lm;             /* n-gram generator model */
typedef struct embinv_embedder embinv_embedder; /* text -> vector embedder */

EMBINV_API const char* embinv_version(void);

/* Message for the most recent failure on this thread. */
EMBINV_API const char* embinv_last_error(void);

EMBINV_API void embinv_string_free(char* s);

/* ---- generator model ---------------------------------------------------- */

/* Trains an add-k smoothed n-gram model from a one-sentence-per-line file. */
EMBINV_API embinv_status embinv_lm_train_file(const char* corpus_path, int order, double add_k,
                                              embinv_lm** out);
EMBINV_API embinv_status embinv_lm_save(const embinv_lm* lm, const char* path);
EMBINV_API embinv_status embinv_lm_load(const char* path, embinv_lm** out);
EMBINV_API int embinv_lm_order(const embinv_lm* lm);
EMBINV_API int embinv_lm_vocab_size(const embinv_lm* lm);
EMBINV_API void embinv_lm_free(embinv_lm* lm);

/* ---- embedders ----------------------------------------------------------- */

EMBINV_API embinv_status embinv_embedder_hash(int dim, int ngram, uint64_t seed,
                                              embinv_embedder** out);
/* Linear image of a base embedder; the base handle stays owned by the caller
 * and may be freed independently. */
EMBINV_API embinv_status embinv_embedder_linear(const embinv_embedder* base, int victim_dim,
                                                uint64_t seed, int normalize,
                                                embinv_embedder** out);
/* Client for a service speaking POST /embed + GET /health. */
EMBINV_API embinv_status embinv_embedder_remote(const char* base_url, int timeout_ms,
                                                int retries, embinv_embedder** out);
EMBINV_API int embinv_embedder_dim(const embinv_embedder* embedder);
/* Writes n_texts * dim doubles into out (row per text). */
EMBINV_API embinv_status embinv_embedder_embed(embinv_embedder* embedder,
                                               const char* const* texts, size_t n_texts,
                                               double* out);
EMBINV_API void embinv_embedder_free(embinv_embedder* embedder);

/* ---- metrics ------------------------------------------------------------- */

/* BLEU-n / ROUGE on the 0..100 scale; negative return means invalid input. */
EMBINV_API double embinv_bleu(const char* candidate, const char* reference, int n);
EMBINV_API double embinv_rouge1(const char* candidate, const char* reference);
EMBINV_API double embinv_rougeL(const char* candidate, const char* reference);

/* ---- experiment / service ------------------------------------------------ */

/* Runs the attack protocol described by a JSON experiment spec; returns a
 * JSON summary (targets, failures, metric means, output paths). */
EMBINV_API embinv_status embinv_run_experiment_json(const char* spec_json,
                                                    char** summary_json_out);

/* Scores a reconstructions JSONL file; victim_json may be NULL to skip COS. */
EMBINV_API embinv_status embinv_eval_file(const char* reconstructions_jsonl,
                                          const char* victim_json, const char* summary_csv_path,
                                          char** summary_json_out);

/* Runs the embedding service described by a JSON spec; blocks until killed. */
EMBINV_API embinv_status embinv_serve_json(const char* spec_json);

#ifdef __cplusplus
}
#endif

#endif /* EMBINV_H */
