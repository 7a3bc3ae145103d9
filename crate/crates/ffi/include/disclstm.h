#ifndef DISCLSTM_H
#define DISCLSTM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DisclstmStatus {
  DISCLSTM_STATUS_OK = 0,
  DISCLSTM_STATUS_NULL_POINTER = 1,
  DISCLSTM_STATUS_INVALID_ARGUMENT = 2,
  DISCLSTM_STATUS_IO = 3,
  DISCLSTM_STATUS_FORMAT = 4,
  DISCLSTM_STATUS_SHAPE = 5,
  DISCLSTM_STATUS_NUMERIC = 6,
  DISCLSTM_STATUS_PANIC = 7,
} DisclstmStatus;

// Opaque model handle.
typedef struct DisclstmModel DisclstmModel;

typedef struct DisclstmModelConfig {
  size_t dim_u;
  size_t dim_g;
  size_t dim_h;
  size_t layers;
  size_t num_classes;
} DisclstmModelConfig;

typedef struct DisclstmGraphStats {
  size_t n;
  size_t edges;
  size_t complete_edges;
  double density;
} DisclstmGraphStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the most recent failure on this thread, or null if
// the last call succeeded. Valid until the next call on this thread.
const char *disclstm_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *disclstm_version(void);

// Load a checkpoint file into a new handle written to `*out`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum DisclstmStatus disclstm_model_load(const char *path, struct DisclstmModel **out);

// Create a freshly initialised model.
//
// # Safety
// `config` and `out` must be valid pointers.
enum DisclstmStatus disclstm_model_init(const struct DisclstmModelConfig *config,
                                        uint64_t seed,
                                        struct DisclstmModel **out);

// Write the model as a checkpoint file.
//
// # Safety
// `model` must come from this library; `path` must be NUL-terminated.
enum DisclstmStatus disclstm_model_save(const struct DisclstmModel *model, const char *path);

// Release a handle. Null is ignored.
//
// # Safety
// `model` must come from this library and not be used afterwards.
void disclstm_model_free(struct DisclstmModel *model);

// # Safety
// `model` must come from this library; `out` must be valid.
enum DisclstmStatus disclstm_model_config(const struct DisclstmModel *model,
                                          struct DisclstmModelConfig *out);

// Logits for one dialogue, written row-major into `logits_out`
// (`n * num_classes` values).
//
// # Safety
// Pointers must reference arrays of the stated lengths.
enum DisclstmStatus disclstm_model_forward(const struct DisclstmModel *model,
                                           const double *embeddings,
                                           size_t n,
                                           size_t dim_u,
                                           const size_t *edges,
                                           size_t num_edges,
                                           double *logits_out);

// Predicted class per utterance, written into `labels_out` (`n` values).
//
// # Safety
// Pointers must reference arrays of the stated lengths.
enum DisclstmStatus disclstm_model_predict(const struct DisclstmModel *model,
                                           const double *embeddings,
                                           size_t n,
                                           size_t dim_u,
                                           const size_t *edges,
                                           size_t num_edges,
                                           size_t *labels_out);

// Support-weighted F1 of `preds` against `golds` over `num_classes`.
//
// # Safety
// `preds` and `golds` must hold `len` values; `out` must be valid.
enum DisclstmStatus disclstm_weighted_f1(const size_t *preds,
                                         const size_t *golds,
                                         size_t len,
                                         size_t num_classes,
                                         double *out);

// Edge statistics of one discourse graph.
//
// # Safety
// `edges` must hold `2 * num_edges` values; `out` must be valid.
enum DisclstmStatus disclstm_graph_stats(size_t n,
                                         const size_t *edges,
                                         size_t num_edges,
                                         struct DisclstmGraphStats *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DISCLSTM_H */
