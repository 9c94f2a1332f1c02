#ifndef ORGATE_H
#define ORGATE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OrgateStatus {
  ORGATE_STATUS_OK = 0,
  ORGATE_STATUS_NULL_POINTER = 1,
  ORGATE_STATUS_INVALID_UTF8 = 2,
  ORGATE_STATUS_CONFIG = 3,
  ORGATE_STATUS_STATE = 4,
  ORGATE_STATUS_NUMERIC = 5,
  ORGATE_STATUS_SHAPE = 6,
  ORGATE_STATUS_LOOKUP = 7,
  ORGATE_STATUS_INPUT = 8,
  ORGATE_STATUS_PARSE = 9,
  ORGATE_STATUS_FORMAT = 10,
  ORGATE_STATUS_IO = 11,
  ORGATE_STATUS_PANIC = 12,
} OrgateStatus;

/**
 * Opaque training or test corpus.
 */
typedef struct OrgateCorpus OrgateCorpus;

/**
 * Opaque OR-Gate prediction store.
 */
typedef struct OrgateStore OrgateStore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the next failing call.
 */
const char *orgate_last_error(void);

/**
 * Generates a clean corpus from a JSON corpus config.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string; `out` must be writable.
 */
enum OrgateStatus orgate_corpus_generate(const char *config_json, struct OrgateCorpus **out);

/**
 * Returns a new corpus with symmetric label noise at rate `eta`.
 *
 * # Safety
 * `corpus` must be a live handle; `out` must be writable.
 */
enum OrgateStatus orgate_corpus_inject_noise(const struct OrgateCorpus *corpus,
                                             double eta,
                                             uint64_t seed,
                                             struct OrgateCorpus **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum OrgateStatus orgate_corpus_load(const char *path, struct OrgateCorpus **out);

/**
 * # Safety
 * `corpus` must be a live handle; `path` a NUL-terminated string.
 */
enum OrgateStatus orgate_corpus_save(const struct OrgateCorpus *corpus, const char *path);

/**
 * Number of samples; 0 for a null handle.
 *
 * # Safety
 * `corpus` must be null or a live handle.
 */
size_t orgate_corpus_len(const struct OrgateCorpus *corpus);

/**
 * # Safety
 * `corpus` must be null or a live handle.
 */
size_t orgate_corpus_num_corrupted(const struct OrgateCorpus *corpus);

/**
 * Copies true and observed labels into caller buffers of length `len`, which must equal the corpus size.
 *
 * # Safety
 * `corpus` must be a live handle; each buffer must hold `len` elements.
 */
enum OrgateStatus orgate_corpus_labels(const struct OrgateCorpus *corpus,
                                       size_t *true_labels,
                                       size_t *observed_labels,
                                       size_t len);

/**
 * # Safety
 * `corpus` must be null or a handle not yet freed.
 */
void orgate_corpus_free(struct OrgateCorpus *corpus);

/**
 * Writes the `k` labels with the highest probability, in rank order, to `out_labels`.
 *
 * # Safety
 * `probabilities` must hold `num_classes` values and `out_labels` room for `k`.
 */
enum OrgateStatus orgate_topk(const double *probabilities,
                              size_t num_classes,
                              size_t k,
                              size_t *out_labels);

/**
 * Creates a compressed OR-Gate store for `num_samples` samples with the given observed labels.
 *
 * # Safety
 * `observed_labels` must hold `num_samples` values; `out` must be writable.
 */
enum OrgateStatus orgate_store_new(size_t k,
                                   size_t num_classes,
                                   const size_t *observed_labels,
                                   size_t num_samples,
                                   struct OrgateStore **out);

/**
 * Appends one epoch's prediction for a sample.
 *
 * # Safety
 * `store` must be a live handle; `probabilities` must hold `num_classes` values.
 */
enum OrgateStatus orgate_store_record(struct OrgateStore *store,
                                      size_t sample_id,
                                      const double *probabilities,
                                      size_t num_classes,
                                      size_t epoch);

/**
 * Sets `*out_clean` to 1 when the sample's label appeared in its top-k set before `current_epoch`, else 0.
 *
 * # Safety
 * `store` must be a live handle; `out_clean` must be writable.
 */
enum OrgateStatus orgate_store_decide(const struct OrgateStore *store,
                                      size_t sample_id,
                                      size_t label,
                                      size_t current_epoch,
                                      int32_t *out_clean);

/**
 * # Safety
 * `store` must be null or a handle not yet freed.
 */
void orgate_store_free(struct OrgateStore *store);

/**
 * Equal error rate of `len` scored trials; `is_target` entries are 0 or nonzero.
 *
 * # Safety
 * `scores` and `is_target` must hold `len` values; outputs must be writable.
 */
enum OrgateStatus orgate_compute_eer(const double *scores,
                                     const uint8_t *is_target,
                                     size_t len,
                                     double *out_eer,
                                     double *out_threshold);

/**
 * Runs an experiment plan given as JSON (missing fields take defaults) and
 * returns the results table as a JSON string to be released with [`orgate_string_free`].
 *
 * # Safety
 * `plan_json` must be a NUL-terminated string; `out_json` must be writable.
 */
enum OrgateStatus orgate_run_plan_json(const char *plan_json, char **out_json);

/**
 * # Safety
 * `s` must be null or a string returned by this library and not yet freed.
 */
void orgate_string_free(char *s);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* ORGATE_H */
