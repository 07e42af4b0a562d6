#ifndef MSTAT_H
#define MSTAT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of a coderivative membership query.
 */
typedef enum MstatMembership {
  MSTAT_MEMBERSHIP_NOT_MEMBER = 0,
  MSTAT_MEMBERSHIP_MEMBER = 1,
  /**
   * The point is not on the graph of the normal-cone map, so the
   * coderivative is empty.
   */
  MSTAT_MEMBERSHIP_EMPTY_CODERIVATIVE = 2,
} MstatMembership;

typedef enum MstatMode {
  MSTAT_MODE_CONVEX = 0,
  MSTAT_MODE_PENALIZED = 1,
} MstatMode;

/**
 * Status codes returned by every entry point.
 */
typedef enum MstatStatus {
  MSTAT_STATUS_OK = 0,
  MSTAT_STATUS_NULL_POINTER = 1,
  MSTAT_STATUS_DIMENSION = 2,
  MSTAT_STATUS_INFEASIBLE = 3,
  MSTAT_STATUS_NOT_GRAPH_POINT = 4,
  MSTAT_STATUS_INVALID_INPUT = 5,
  MSTAT_STATUS_NUMERIC = 6,
  MSTAT_STATUS_PARSE = 7,
  MSTAT_STATUS_IO = 8,
  MSTAT_STATUS_TOO_MANY_ACTIVE = 9,
  MSTAT_STATUS_PANIC = 10,
} MstatStatus;

/**
 * Opaque feasible set handle.
 */
typedef struct MstatSet MstatSet;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *mstat_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mstat_version(void);

/**
 * `{z : A z ≤ b}` with `A` given row-major as `m × d`.
 *
 * # Safety
 * `a` must hold `m * d` doubles, `b` must hold `m`, and `out` must be writable.
 */
enum MstatStatus mstat_set_polyhedron(const double *a,
                                      const double *b,
                                      size_t m,
                                      size_t d,
                                      struct MstatSet **out);

/**
 * The nonnegative orthant in dimension `d`.
 *
 * # Safety
 * `out` must be writable.
 */
enum MstatStatus mstat_set_orthant(size_t d, struct MstatSet **out);

/**
 * `{z ≥ 0, Σ z ≤ 1}` in dimension `d`.
 *
 * # Safety
 * `out` must be writable.
 */
enum MstatStatus mstat_set_simplex(size_t d, struct MstatSet **out);

/**
 * Releases a set handle. Null is ignored.
 *
 * # Safety
 * `set` must be null or a handle from this library not yet freed.
 */
void mstat_set_free(struct MstatSet *set);

/**
 * Dimension of the ambient space, or 0 for a null handle.
 *
 * # Safety
 * `set` must be null or a live handle.
 */
size_t mstat_set_dim(const struct MstatSet *set);

/**
 * Whether `ζ ∈ D*N_Z(z, −g)(η)`, with `g` the lower-level gradient. All
 * vectors have the dimension of `set`.
 *
 * # Safety
 * Vector pointers must hold `dim` doubles; `out` must be writable.
 */
enum MstatStatus mstat_coderivative_member(const struct MstatSet *set,
                                           const double *z,
                                           const double *g,
                                           const double *zeta,
                                           const double *eta,
                                           double eps,
                                           enum MstatMembership *out);

/**
 * Same query answered by face-pair enumeration, for cross-checking.
 *
 * # Safety
 * As for [`mstat_coderivative_member`].
 */
enum MstatStatus mstat_coderivative_member_oracle(const struct MstatSet *set,
                                                  const double *z,
                                                  const double *g,
                                                  const double *zeta,
                                                  const double *eta,
                                                  double eps,
                                                  enum MstatMembership *out);

/**
 * Verifies a certificate given as JSON against a problem given as JSON.
 * On success `*out_pass` is 1 or 0 and `*out_report`, when `out_report` is
 * non-null, receives the report JSON to be released with
 * [`mstat_string_free`].
 *
 * # Safety
 * String arguments must be NUL-terminated; `out_pass` must be writable and
 * `out_report` null or writable.
 */
enum MstatStatus mstat_verify_json(const char *problem_json,
                                   const char *certificate_json,
                                   enum MstatMode mode,
                                   double tol,
                                   double value_tol,
                                   int32_t *out_pass,
                                   char **out_report);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must be null or a string from this library not yet freed.
 */
void mstat_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MSTAT_H */
