/* C ABI for the colmax late-interaction retrieval engine. */

#ifndef COLMAX_H
#define COLMAX_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define COLMAX_OK 0

/**
 * A required pointer argument was null.
 */
#define COLMAX_ERR_NULL_ARGUMENT 1

/**
 * An argument failed validation before reaching the engine.
 */
#define COLMAX_ERR_INVALID_ARGUMENT 2

/**
 * The engine rejected the operation; colmax_last_error has the detail.
 */
#define COLMAX_ERR_ENGINE 3

/**
 * Opaque ranked-hit list produced by colmax_search.
 */
typedef struct ColmaxHits ColmaxHits;

/**
 * Opaque handle over a loaded index.
 */
typedef struct ColmaxIndex ColmaxIndex;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. Empty string when no
 * failure has been recorded. The pointer stays valid until the next
 * failing call on the same thread.
 */
const char *colmax_last_error(void);

/**
 * Crate version as a static NUL-terminated string.
 */
const char *colmax_version(void);

/**
 * Opens an index file. On success writes an owned handle to `out_index`.
 *
 * # Safety
 * `path` must point to a NUL-terminated string and `out_index` to writable
 * pointer storage.
 */
int colmax_index_open(const char *path, struct ColmaxIndex **out_index);

/**
 * Releases an index handle. Null is a no-op.
 *
 * # Safety
 * `index` must be a pointer from colmax_index_open, freed at most once.
 */
void colmax_index_free(struct ColmaxIndex *index);

/**
 * Number of documents, or 0 for a null handle.
 *
 * # Safety
 * `index` must be null or a live handle from colmax_index_open.
 */
uint64_t colmax_index_doc_count(const struct ColmaxIndex *index);

/**
 * Embedding dimension, or 0 for a null handle.
 *
 * # Safety
 * `index` must be null or a live handle from colmax_index_open.
 */
uint32_t colmax_index_dim(const struct ColmaxIndex *index);

/**
 * Payload precision code (0 fp32, 1 fp16, 2 int8, 3 binary), or 255 for a
 * null handle.
 *
 * # Safety
 * `index` must be null or a live handle from colmax_index_open.
 */
uint8_t colmax_index_precision(const struct ColmaxIndex *index);

/**
 * MaxSim-ranks the whole index against one query and writes an owned hit
 * list to `out_hits`. `query` holds `token_count` tokens of `dim` floats
 * each, token-major.
 *
 * # Safety
 * `index` must be a live handle, `query` must point to
 * `token_count * dim` floats, and `out_hits` to writable pointer storage.
 */
int colmax_search(const struct ColmaxIndex *index,
                  const float *query,
                  size_t token_count,
                  size_t dim,
                  size_t k,
                  struct ColmaxHits **out_hits);

/**
 * Number of hits, or 0 for a null handle.
 *
 * # Safety
 * `hits` must be null or a live handle from colmax_search.
 */
size_t colmax_hits_len(const struct ColmaxHits *hits);

/**
 * Borrowed doc id of hit `i`, or null when out of range. Valid while the
 * hit list is alive.
 *
 * # Safety
 * `hits` must be null or a live handle from colmax_search.
 */
const char *colmax_hits_doc_id(const struct ColmaxHits *hits, size_t i);

/**
 * Score of hit `i`, or NaN when out of range.
 *
 * # Safety
 * `hits` must be null or a live handle from colmax_search.
 */
float colmax_hits_score(const struct ColmaxHits *hits, size_t i);

/**
 * Releases a hit list. Null is a no-op.
 *
 * # Safety
 * `hits` must be a pointer from colmax_search, freed at most once.
 */
void colmax_hits_free(struct ColmaxHits *hits);

/**
 * Late-interaction score of one query against one document, dot-product
 * token similarity. Both buffers are token-major with `dim` floats per
 * token.
 *
 * # Safety
 * `query` must point to `query_tokens * dim` floats, `doc` to
 * `doc_tokens * dim` floats, and `out_score` to a writable float.
 */
int colmax_maxsim_score(const float *query,
                        size_t query_tokens,
                        const float *doc,
                        size_t doc_tokens,
                        size_t dim,
                        float *out_score);

/**
 * Storage footprint in GiB for a corpus of `docs` documents averaging
 * `avg_tokens` tokens at `dim` dims under precision code `precision`
 * (0 fp32, 1 fp16, 2 int8, 3 binary).
 *
 * # Safety
 * `out_gib` must point to a writable double.
 */
int colmax_estimate_storage_gib(uint64_t docs,
                                double avg_tokens,
                                uint32_t dim,
                                uint8_t precision,
                                double *out_gib);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COLMAX_H */
