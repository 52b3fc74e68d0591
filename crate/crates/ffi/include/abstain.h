#ifndef ABSTAIN_H
#define ABSTAIN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

enum AbstainStatus
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : int32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  ABSTAIN_STATUS_OK = 0,
  ABSTAIN_STATUS_NULL_POINTER = 1,
  ABSTAIN_STATUS_INVALID_ARGUMENT = 2,
  ABSTAIN_STATUS_GRAPH = 3,
  ABSTAIN_STATUS_LOSS = 4,
  ABSTAIN_STATUS_SURROGATE = 5,
  ABSTAIN_STATUS_DECODE = 6,
  ABSTAIN_STATUS_IO = 7,
  ABSTAIN_STATUS_PANIC = 8,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum AbstainStatus AbstainStatus;
#else
typedef int32_t AbstainStatus;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

enum AbstainKernel
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : int32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  ABSTAIN_KERNEL_LINEAR = 0,
  ABSTAIN_KERNEL_GAUSSIAN = 1,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum AbstainKernel AbstainKernel;
#else
typedef int32_t AbstainKernel;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

/**
 * A label graph.
 */
typedef struct AbstainGraph AbstainGraph;

/**
 * A loss in inner-product form.
 */
typedef struct AbstainLoss AbstainLoss;

/**
 * A fitted surrogate together with the loss shape it was trained for.
 */
typedef struct AbstainModel AbstainModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *abstain_version(void);

/**
 * Message of the last failed call on this thread, or an empty string. The
 * pointer stays valid until the next call on the same thread.
 */
const char *abstain_last_error(void);

/**
 * Parses a graph in the text format (`d=<n>`, then `h <parent> <child>` and `e <i> <j>` lines).
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
AbstainStatus abstain_graph_parse(const char *text, struct AbstainGraph **out);

/**
 * Root → aspects → polarities tree.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
AbstainStatus abstain_graph_opinion_tree(size_t aspects,
                                         size_t polarities,
                                         bool exclusive_polarities,
                                         struct AbstainGraph **out);

/**
 * Number of nodes, or 0 for a null handle.
 *
 * # Safety
 * `graph` must be null or a live handle.
 */
size_t abstain_graph_node_count(const struct AbstainGraph *graph);

/**
 * # Safety
 * `graph` must be null or a handle not yet freed.
 */
void abstain_graph_free(struct AbstainGraph *graph);

/**
 * Hamming loss on `d` nodes.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
AbstainStatus abstain_loss_hamming(size_t d, struct AbstainLoss **out);

/**
 * Binary loss with a reject option costing `reject_cost`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
AbstainStatus abstain_loss_binary(double reject_cost, struct AbstainLoss **out);

/**
 * Hierarchical H-loss; `weights` may be null for sibling weights.
 *
 * # Safety
 * `graph` must be a live handle, `weights` null or `d` doubles, `out` valid.
 */
AbstainStatus abstain_loss_h(const struct AbstainGraph *graph,
                             const double *weights_ptr,
                             bool literal_consecutive,
                             struct AbstainLoss **out);

/**
 * Abstention-aware Ha-loss; `weights` may be null for sibling weights.
 *
 * # Safety
 * `graph` must be a live handle, `weights` null or `d` doubles, `out` valid.
 */
AbstainStatus abstain_loss_ha(const struct AbstainGraph *graph,
                              const double *weights_ptr,
                              double k_a,
                              double k_ac,
                              bool literal_consecutive,
                              struct AbstainLoss **out);

/**
 * Size `q` of the output feature map, or 0 for a null handle.
 *
 * # Safety
 * `loss` must be null or a live handle.
 */
size_t abstain_loss_feature_dim(const struct AbstainLoss *loss);

/**
 * Loss of predicting `(y_h, y_r)` when the truth is `y`; all arrays have length `d`.
 *
 * # Safety
 * Array pointers must hold `d` bytes; `out` must be valid.
 */
AbstainStatus abstain_loss_evaluate(const struct AbstainLoss *loss,
                                    const uint8_t *y_h,
                                    const uint8_t *y_r,
                                    const uint8_t *y,
                                    size_t d,
                                    double *out);

/**
 * # Safety
 * `loss` must be null or a handle not yet freed.
 */
void abstain_loss_free(struct AbstainLoss *loss);

/**
 * Fits kernel ridge regression from `n` inputs of dimension `m` (`xs`, row-major
 * `n × m`) onto the loss features of the labelings `ys` (row-major `n × d`).
 * `kernel` is an [`AbstainKernel`] value; `gamma` is only read for the gaussian kernel.
 *
 * # Safety
 * `xs` must hold `n·m` doubles, `ys` `n·d` bytes, `out` must be valid.
 */
AbstainStatus abstain_model_fit(const struct AbstainLoss *loss,
                                const double *xs,
                                const uint8_t *ys,
                                size_t n,
                                size_t m,
                                int32_t kernel,
                                double gamma,
                                double lambda,
                                struct AbstainModel **out);

/**
 * Loads a model file written by [`abstain_model_save`] or the command line.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
AbstainStatus abstain_model_load(const char *path, struct AbstainModel **out);

/**
 * # Safety
 * `model` must be a live handle and `path` a NUL-terminated string.
 */
AbstainStatus abstain_model_save(const struct AbstainModel *model, const char *path);

/**
 * Input dimension `m` of a model, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t abstain_model_input_dim(const struct AbstainModel *model);

/**
 * Writes the `q` surrogate scores `ĝ(x)` into `scores`.
 *
 * # Safety
 * `x` must hold `m` doubles and `scores` room for `q`.
 */
AbstainStatus abstain_model_predict(const struct AbstainModel *model,
                                    const double *x,
                                    size_t m,
                                    double *scores,
                                    size_t q);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void abstain_model_free(struct AbstainModel *model);

/**
 * Decodes the input `x` with `model`. Writes the prediction `y_h` and the
 * reject vector `y_r` (1 = predict, 0 = abstain); `objective` may be null.
 *
 * # Safety
 * `x` must hold `m` doubles, `y_h`/`y_r` room for `d` bytes.
 */
AbstainStatus abstain_decode(const struct AbstainModel *model,
                             const struct AbstainLoss *loss,
                             const struct AbstainGraph *graph,
                             const double *x,
                             size_t m,
                             bool allow_abstention,
                             bool strict,
                             uint8_t *y_h,
                             uint8_t *y_r,
                             size_t d,
                             double *objective);

/**
 * Decodes a score vector of length `q` directly, without a model.
 *
 * # Safety
 * `scores` must hold `q` doubles, `y_h`/`y_r` room for `d` bytes.
 */
AbstainStatus abstain_decode_scores(const struct AbstainLoss *loss,
                                    const struct AbstainGraph *graph,
                                    const double *scores,
                                    size_t q,
                                    bool allow_abstention,
                                    bool strict,
                                    uint8_t *y_h,
                                    uint8_t *y_r,
                                    size_t d,
                                    double *objective);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ABSTAIN_H */
