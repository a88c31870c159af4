#ifndef GGMBD_H
#define GGMBD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every call.
typedef enum GgmStatus {
  GGM_STATUS_OK = 0,
  GGM_STATUS_NULL_POINTER = 1,
  GGM_STATUS_INVALID_ARGUMENT = 2,
  GGM_STATUS_GRAPH_ERROR = 3,
  GGM_STATUS_NUMERIC_ERROR = 4,
  GGM_STATUS_PARSE_ERROR = 5,
  GGM_STATUS_BUFFER_TOO_SMALL = 6,
  GGM_STATUS_PANIC = 7,
} GgmStatus;

// Source of the prior ratio in the birth-death sampler.
typedef enum GgmProvider {
  GGM_PROVIDER_APPROXIMATION = 0,
  GGM_PROVIDER_MC_RATIO = 1,
  GGM_PROVIDER_EXACT_DECOMPOSABLE = 2,
} GgmProvider;

// Opaque graph handle.
typedef struct GgmGraph GgmGraph;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null after a success.
// The pointer stays valid until the next call on the same thread.
const char *ggm_last_error(void);

// Graph on `p` vertices from `n_edges` pairs stored flat in `edges`.
//
// # Safety
// `edges` must point to `2 * n_edges` values (may be null when `n_edges`
// is 0) and `out` must be writable.
enum GgmStatus ggm_graph_new(size_t p, const size_t *edges, size_t n_edges, struct GgmGraph **out);

// Random graph of the named kind: `scale_free`, `random_p`, `random_2p`
// or `cluster`.
//
// # Safety
// `kind` must be a nul-terminated string and `out` writable.
enum GgmStatus ggm_graph_generate(const char *kind, size_t p, uint64_t seed, struct GgmGraph **out);

// # Safety
// `json` must be a nul-terminated string and `out` writable.
enum GgmStatus ggm_graph_from_json(const char *json, struct GgmGraph **out);

// JSON text of the graph; release it with [`ggm_string_free`].
//
// # Safety
// `g` must be a live handle and `out` writable.
enum GgmStatus ggm_graph_to_json(const struct GgmGraph *g, char **out);

// # Safety
// `s` must come from this library and not have been freed.
void ggm_string_free(char *s);

// # Safety
// `g` must be null or a live handle; it is invalid afterwards.
void ggm_graph_free(struct GgmGraph *g);

// # Safety
// `g` must be a live handle; out pointers must be writable.
enum GgmStatus ggm_graph_counts(const struct GgmGraph *g, size_t *n_vertices, size_t *n_edges);

// Copies the sorted edge list into `buf` as flat pairs. `capacity` counts
// pairs; when too small, nothing is copied, `written` holds the needed
// count and the status is `GGM_STATUS_BUFFER_TOO_SMALL`.
//
// # Safety
// `buf` must hold `2 * capacity` values; `written` must be writable.
enum GgmStatus ggm_graph_edges(const struct GgmGraph *g,
                               size_t *buf,
                               size_t capacity,
                               size_t *written);

// Closed-form approximation to I_{G−e}/I_G for an edge whose endpoints
// have `d` common neighbors.
//
// # Safety
// `out` must be writable.
enum GgmStatus ggm_ratio_approx(double delta, size_t d, double *value);

// Approximate I_{G−e}/I_G for the edge (i, j) of `g`, with its error bound.
//
// # Safety
// `g` must be a live handle; out pointers must be writable.
enum GgmStatus ggm_edge_ratio_approx(const struct GgmGraph *g,
                                     size_t i,
                                     size_t j,
                                     double delta,
                                     double *value,
                                     double *bound);

// Monte Carlo log I_{G−e}/I_G with its standard error.
//
// # Safety
// `g` must be a live handle; out pointers must be writable.
enum GgmStatus ggm_edge_ratio_mc(const struct GgmGraph *g,
                                 size_t i,
                                 size_t j,
                                 double delta,
                                 size_t n_samples,
                                 uint64_t seed,
                                 double *log_value,
                                 double *std_error);

// Monte Carlo log I_G(δ, I) with its standard error.
//
// # Safety
// `g` must be a live handle; out pointers must be writable.
enum GgmStatus ggm_log_norm_mc(const struct GgmGraph *g,
                               double delta,
                               size_t n_samples,
                               uint64_t seed,
                               double *log_value,
                               double *std_error);

// Exact log I_G(δ, I) of a decomposable graph.
//
// # Safety
// `g` must be a live handle; `log_value` must be writable.
enum GgmStatus ggm_log_norm_exact(const struct GgmGraph *g, double delta, double *log_value);

// Monte Carlo relative gap of the approximation for `d` common neighbors
// and long paths with the given interior sizes.
//
// # Safety
// `lengths` must point to `n_lengths` values (may be null when 0); out
// pointers must be writable.
enum GgmStatus ggm_theorem_gap(double delta,
                               size_t d,
                               const size_t *lengths,
                               size_t n_lengths,
                               size_t n_samples,
                               uint64_t seed,
                               double *gap,
                               double *std_error);

// Runs the birth-death sampler on row-major `n × p` data and writes the
// `p × p` row-major matrix of posterior edge probabilities to `probs`.
// `provider` takes a [`GgmProvider`] value.
//
// # Safety
// `data` must hold `n * p` values and `probs` room for `p * p`.
enum GgmStatus ggm_bdmcmc_edge_posteriors(const double *data,
                                          size_t n,
                                          size_t p,
                                          double delta,
                                          size_t iterations,
                                          size_t burn_in,
                                          uint32_t provider,
                                          size_t mc_samples,
                                          uint64_t seed,
                                          double *probs);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GGMBD_H */
