#ifndef BIMIND_H
#define BIMIND_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of a call. Anything other than `Ok` leaves an explanation
 * readable through `bimind_last_error` on the calling thread.
 */
typedef enum BimindStatus {
  /**
   * The call succeeded.
   */
  BIMIND_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  BIMIND_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  BIMIND_STATUS_INVALID_UTF8 = 2,
  /**
   * An input was structurally invalid: malformed config or dataset,
   * shape mismatch, label out of range, fingerprint mismatch, ...
   */
  BIMIND_STATUS_INVALID_INPUT = 3,
  /**
   * A file could not be read or written.
   */
  BIMIND_STATUS_IO = 4,
  /**
   * Training produced a non-finite loss. The last finite checkpoint and
   * bank are still written before this is reported.
   */
  BIMIND_STATUS_DIVERGED = 5,
  /**
   * An internal invariant failed (a bug, not a usage error).
   */
  BIMIND_STATUS_INTERNAL = 6,
} BimindStatus;

/**
 * Opaque handle to a loaded memory bank. Obtain with `bimind_bank_open`,
 * release with `bimind_bank_free`.
 */
typedef struct BimindBank BimindBank;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string. Never null; do not
 * free.
 */
const char *bimind_version(void);

/**
 * Copy the message left by the most recent failing call on this thread
 * into `buf`, NUL-terminated and truncated to `cap` bytes (including the
 * NUL). Returns the full message length in bytes excluding the NUL, so a
 * call with a null `buf` or zero `cap` sizes the buffer without copying.
 *
 * # Safety
 * `buf` must be null or point at `cap` writable bytes.
 */
size_t bimind_last_error(char *buf, size_t cap);

/**
 * Generate a synthetic corpus. `spec_path` names a `key = value` file
 * (kind, n, seed, window); the corpus is written to `out_path` as JSONL,
 * one instance per line.
 *
 * # Safety
 * Both arguments must be null or NUL-terminated strings.
 */
enum BimindStatus bimind_synth_gen(const char *spec_path, const char *out_path);

/**
 * Build a semantic memory bank over a JSONL dataset (one JSON object per
 * line: id, text, label) and write it to `out_path`. `dim` is the
 * embedding width and `seed` the embedding hash seed; both become part of
 * the bank fingerprint.
 *
 * # Safety
 * Both path arguments must be null or NUL-terminated strings.
 */
enum BimindStatus bimind_memory_build(const char *data_path,
                                      const char *out_path,
                                      size_t dim,
                                      uint64_t seed);

/**
 * Train a model. `config_path` names a `key = value` run configuration
 * (including any `disable_*` switches), `data_path` the JSONL dataset to
 * split and train on. The checkpoint is written to `ckpt_path` and its
 * memory bank next to it as `<ckpt>.bank`. If training diverges, the last
 * finite state is still written and `Diverged` is returned.
 *
 * # Safety
 * All arguments must be null or NUL-terminated strings.
 */
enum BimindStatus bimind_train(const char *config_path,
                               const char *data_path,
                               const char *ckpt_path);

/**
 * Evaluate a checkpoint on a JSONL dataset and write `report.json`,
 * `report.txt`, and `traces.jsonl` into `report_dir` (created if needed),
 * matching the command-line tool byte for byte. `bank_path` may be null to
 * use the checkpoint's sibling `<ckpt>.bank`.
 *
 * # Safety
 * All arguments must be null or NUL-terminated strings.
 */
enum BimindStatus bimind_eval(const char *ckpt_path,
                              const char *data_path,
                              const char *report_dir,
                              const char *bank_path);

/**
 * Knowledge gain of a single instance: the knowledge head's logit for the
 * true class minus the content head's, `ze[label] - z0[label]`. `z0` and
 * `ze` must each point at `len` logits; the gain is stored in `*out`.
 *
 * # Safety
 * `z0` and `ze` must be null or point at `len` readable doubles, and
 * `out` at one writable double.
 */
enum BimindStatus bimind_vox(const double *z0,
                             const double *ze,
                             size_t len,
                             size_t label,
                             double *out);

/**
 * Load a persisted memory bank. Returns null on failure (the message is
 * available through `bimind_last_error`); otherwise the handle stays valid
 * until `bimind_bank_free`.
 *
 * # Safety
 * `path` must be null or a NUL-terminated string.
 */
struct BimindBank *bimind_bank_open(const char *path);

/**
 * Number of rows in the bank; 0 for a null handle.
 *
 * # Safety
 * `bank` must be null or a handle from `bimind_bank_open`.
 */
size_t bimind_bank_len(const struct BimindBank *bank);

/**
 * Embedding width of the bank's rows; 0 for a null handle.
 *
 * # Safety
 * `bank` must be null or a handle from `bimind_bank_open`.
 */
size_t bimind_bank_dim(const struct BimindBank *bank);

/**
 * Embedding hash seed the bank was built with; 0 for a null handle.
 *
 * # Safety
 * `bank` must be null or a handle from `bimind_bank_open`.
 */
uint64_t bimind_bank_seed(const struct BimindBank *bank);

/**
 * Copy the instance id of row `index` into `buf`, NUL-terminated and
 * truncated to `cap` bytes (including the NUL). Returns the full id length
 * in bytes excluding the NUL, or 0 if the handle is null or the index is
 * out of range.
 *
 * # Safety
 * `bank` must be null or a handle from `bimind_bank_open`; `buf` must be
 * null or point at `cap` writable bytes.
 */
size_t bimind_bank_id(const struct BimindBank *bank, size_t index, char *buf, size_t cap);

/**
 * Label of row `index`, or -1 if the handle is null or the index is out
 * of range.
 *
 * # Safety
 * `bank` must be null or a handle from `bimind_bank_open`.
 */
int32_t bimind_bank_label(const struct BimindBank *bank, size_t index);

/**
 * Exact top-k rows by cosine similarity against `query` (`query_len` must
 * equal the bank dimension). Ranks descend by similarity with ties broken
 * by ascending instance id; a row whose id equals `exclude_id` (nullable)
 * is skipped. Row indices and similarities are copied into the caller's
 * arrays, which must each hold at least `k` elements. `*out_written`
 * receives the number of rows produced; it is less than `k` only when the
 * bank has fewer rows after exclusion, and `*out_clamped` flags that case.
 *
 * # Safety
 * `bank` must be null or a handle from `bimind_bank_open`; `query` must
 * point at `query_len` readable doubles; `out_indices` and
 * `out_similarities` at `k` writable elements each; `out_written` and
 * `out_clamped` at one writable element each; `exclude_id` must be null
 * or a NUL-terminated string.
 */
enum BimindStatus bimind_bank_topk(const struct BimindBank *bank,
                                   const double *query,
                                   size_t query_len,
                                   size_t k,
                                   const char *exclude_id,
                                   size_t *out_indices,
                                   double *out_similarities,
                                   size_t *out_written,
                                   bool *out_clamped);

/**
 * Release a handle from `bimind_bank_open`. Null is a no-op.
 *
 * # Safety
 * `bank` must be null or a handle from `bimind_bank_open` that has not
 * already been freed.
 */
void bimind_bank_free(struct BimindBank *bank);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BIMIND_H */
