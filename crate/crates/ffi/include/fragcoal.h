#ifndef FRAGCOAL_H
#define FRAGCOAL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FcStatus {
  FC_STATUS_OK = 0,
  FC_STATUS_NULL_POINTER = 1,
  FC_STATUS_INVALID_ARGUMENT = 2,
  FC_STATUS_NUMERICAL = 3,
  /**
   * No event can fire; the simulator state is final.
   */
  FC_STATUS_ABSORBED = 4,
  FC_STATUS_BUFFER_TOO_SMALL = 5,
  FC_STATUS_PANIC = 6,
} FcStatus;

/**
 * Merge/fragmentation rate kernel.
 */
typedef struct FcKernel FcKernel;

/**
 * One stochastic trajectory, stepped event by event.
 */
typedef struct FcSimulator FcSimulator;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty if none. Valid
 * until the next failing call on the same thread.
 */
const char *fc_last_error(void);

/**
 * Builds a kernel with `alpha(orders[i]) = alphas[i]`.
 *
 * # Safety
 * `orders` and `alphas` must point to `len` readable values; `out` must be
 * writable.
 */
enum FcStatus fc_kernel_new(const uint32_t *orders,
                            const double *alphas,
                            size_t len,
                            double lambda,
                            struct FcKernel **out);

/**
 * Parses a kernel from JSON such as `{"lambda":0.1,"alpha":{"2":1}}`.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum FcStatus fc_kernel_from_json(const char *json, struct FcKernel **out);

/**
 * # Safety
 * `kernel` must come from a kernel constructor and not be freed twice.
 */
void fc_kernel_free(struct FcKernel *kernel);

/**
 * Smallest merge order with positive rate.
 *
 * # Safety
 * Pointers must be valid.
 */
enum FcStatus fc_kernel_m(const struct FcKernel *kernel, uint32_t *out);

/**
 * Starts `n` singletons at `t = 0`. The kernel is copied.
 *
 * # Safety
 * Pointers must be valid.
 */
enum FcStatus fc_simulator_new(const struct FcKernel *kernel,
                               uint64_t n,
                               uint64_t seed,
                               struct FcSimulator **out);

/**
 * # Safety
 * `sim` must come from [`fc_simulator_new`] and not be freed twice.
 */
void fc_simulator_free(struct FcSimulator *sim);

/**
 * Fires one event. Returns `FC_STATUS_ABSORBED` if none can fire.
 *
 * # Safety
 * `sim` must be valid.
 */
enum FcStatus fc_simulator_step(struct FcSimulator *sim);

/**
 * # Safety
 * Pointers must be valid.
 */
enum FcStatus fc_simulator_time(const struct FcSimulator *sim, double *out);

/**
 * # Safety
 * Pointers must be valid.
 */
enum FcStatus fc_simulator_cluster_count(const struct FcSimulator *sim, uint64_t *out);

/**
 * Empirical generating function at `x` in `[0, 1]`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum FcStatus fc_simulator_empirical_g(const struct FcSimulator *sim, double x, double *out);

/**
 * Cluster counts by size, `buf[k]` for `k = 0..=n` (`n + 1` entries).
 *
 * # Safety
 * `buf` must hold `len` writable values; `needed` may be null.
 */
enum FcStatus fc_simulator_histogram(const struct FcSimulator *sim,
                                     uint64_t *buf,
                                     size_t len,
                                     size_t *needed);

/**
 * Stationary `G(1)` of the limit equations at rate `lambda > 0`; the
 * kernel's own `lambda` is ignored.
 *
 * # Safety
 * Pointers must be valid.
 */
enum FcStatus fc_solve_g1(const struct FcKernel *kernel, double lambda, double *out);

/**
 * `lambda -> 0` limit law for smallest merge order `m`: `buf[k - 1] = p_k`
 * for `k = 1..=k_max`.
 *
 * # Safety
 * `buf` must hold `len` writable values; `needed` may be null.
 */
enum FcStatus fc_limit_p(uint64_t m, uint64_t k_max, double *buf, size_t len, size_t *needed);

/**
 * Stationary densities `w_j` and cluster-size law `p_j` of the limit
 * equations, `j = 1..=j_max`, written to `w[j - 1]` and `p[j - 1]`. Either
 * output may be null.
 *
 * # Safety
 * Non-null outputs must hold `len` writable values.
 */
enum FcStatus fc_stationary_w(const struct FcKernel *kernel,
                              double lambda,
                              size_t j_max,
                              double *w,
                              double *p,
                              size_t len);

/**
 * Stationary law of the exact finite-`n` chain (`n <= 12`) over partitions
 * of `n` in reverse lexicographic order (`[n]` first, all singletons last).
 *
 * # Safety
 * `buf` must hold `len` writable values; `needed` may be null.
 */
enum FcStatus fc_exact_stationary(const struct FcKernel *kernel,
                                  uint32_t n,
                                  double *buf,
                                  size_t len,
                                  size_t *needed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FRAGCOAL_H */
