#ifndef EMBSTAB_H
#define EMBSTAB_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. The nonzero values match the command-line exit codes,
 * with two extra codes for null pointers and caught panics.
 */
typedef enum EmbstabStatus {
  EMBSTAB_STATUS_OK = 0,
  EMBSTAB_STATUS_INVALID_ARGUMENT = 1,
  EMBSTAB_STATUS_DATA_ERROR = 2,
  EMBSTAB_STATUS_NUMERIC_ERROR = 3,
  EMBSTAB_STATUS_NULL_POINTER = 4,
  EMBSTAB_STATUS_PANIC = 5,
} EmbstabStatus;

/**
 * Opaque embedding matrix (N rows, D columns).
 */
typedef struct EmbstabEmbedding EmbstabEmbedding;

/**
 * Opaque classifier output matrix (n rows, C columns).
 */
typedef struct EmbstabOutput EmbstabOutput;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null.
 * The pointer stays valid until the next call into this library on the same thread.
 */
const char *embstab_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *embstab_version(void);

/**
 * Copies `num_nodes * dim` row-major values into a new embedding.
 *
 * # Safety
 * `values` must point to `num_nodes * dim` doubles; `out` must be writable.
 */
enum EmbstabStatus embstab_embedding_new(size_t num_nodes,
                                         size_t dim,
                                         const double *values,
                                         struct EmbstabEmbedding **out);

/**
 * Reads an EMB1 file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum EmbstabStatus embstab_embedding_read(const char *path, struct EmbstabEmbedding **out);

/**
 * # Safety
 * `handle` must come from this library; `num_nodes` and `dim` must be writable.
 */
enum EmbstabStatus embstab_embedding_shape(const struct EmbstabEmbedding *handle,
                                           size_t *num_nodes,
                                           size_t *dim);

/**
 * # Safety
 * `handle` must come from this library and not be used afterwards. Null is ignored.
 */
void embstab_embedding_free(struct EmbstabEmbedding *handle);

/**
 * Copies `n * classes` row-major probabilities into a new output matrix.
 *
 * # Safety
 * `values` must point to `n * classes` doubles; `out` must be writable.
 */
enum EmbstabStatus embstab_output_new(size_t n,
                                      size_t classes,
                                      const double *values,
                                      struct EmbstabOutput **out);

/**
 * Reads an OUT1 file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum EmbstabStatus embstab_output_read(const char *path, struct EmbstabOutput **out);

/**
 * # Safety
 * `handle` must come from this library; `n` and `classes` must be writable.
 */
enum EmbstabStatus embstab_output_shape(const struct EmbstabOutput *handle,
                                        size_t *n,
                                        size_t *classes);

/**
 * # Safety
 * `handle` must come from this library and not be used afterwards. Null is ignored.
 */
void embstab_output_free(struct EmbstabOutput *handle);

/**
 * Representational similarity between two embeddings.
 * `measure` is one of `aligned_cos`, `dist_corr`, `knn_jaccard`, `second_cos`;
 * `k` is used only by the neighborhood measures.
 *
 * # Safety
 * Pointers must be valid as described above.
 */
enum EmbstabStatus embstab_repsim(const char *measure,
                                  const struct EmbstabEmbedding *a,
                                  const struct EmbstabEmbedding *b,
                                  size_t k,
                                  double *out);

/**
 * Pairwise functional similarity between two output matrices.
 * `measure` is one of `disagreement`, `norm_disagreement`, `jsd` (nats).
 * `labels` (length `num_labels`) is required for `norm_disagreement` and may be null otherwise.
 *
 * # Safety
 * Pointers must be valid as described above.
 */
enum EmbstabStatus embstab_funcsim(const char *measure,
                                   const struct EmbstabOutput *a,
                                   const struct EmbstabOutput *b,
                                   const size_t *labels,
                                   size_t num_labels,
                                   double *out);

/**
 * Fraction of instances on which all `count` outputs predict the same class.
 *
 * # Safety
 * `outputs` must point to `count` valid handles.
 */
enum EmbstabStatus embstab_stable_core(const struct EmbstabOutput *const *outputs,
                                       size_t count,
                                       double *out);

/**
 * Accuracy of the argmax predictions in `output` against `labels`.
 *
 * # Safety
 * `labels` must point to `num_labels` values.
 */
enum EmbstabStatus embstab_accuracy(const struct EmbstabOutput *output,
                                    const size_t *labels,
                                    size_t num_labels,
                                    double *out);

/**
 * Runs a sweep from a JSON config and returns the report as a newly
 * allocated string (CSV when `json` is 0, JSON otherwise).
 * Relative paths in the config resolve against the working directory.
 * Free the result with [`embstab_string_free`].
 *
 * # Safety
 * `config_json` must be a NUL-terminated string; `out` must be writable.
 */
enum EmbstabStatus embstab_sweep(const char *config_json, int32_t json, char **out);

/**
 * # Safety
 * `s` must come from this library and not be used afterwards. Null is ignored.
 */
void embstab_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EMBSTAB_H */
