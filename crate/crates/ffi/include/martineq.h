#ifndef MARTINEQ_H
#define MARTINEQ_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MqStatus {
  MQ_STATUS_OK = 0,
  MQ_STATUS_NULL_POINTER = 1,
  MQ_STATUS_INVALID_INPUT = 2,
  MQ_STATUS_DIVERGED = 3,
  MQ_STATUS_MAX_ITERATIONS = 4,
  MQ_STATUS_BUFFER_TOO_SMALL = 5,
  MQ_STATUS_CHECK_FAILED = 6,
  MQ_STATUS_PANIC = 7,
} MqStatus;

/**
 * Opaque validated problem.
 */
typedef struct MqProblem MqProblem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *mq_last_error_message(void);

/**
 * Parses and validates a problem given as JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MqStatus mq_problem_from_json(const char *json, struct MqProblem **out);

/**
 * Builds the reduced Doob problem. `c <= 0` selects the sharp constant and
 * `span <= 0` the default span.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum MqStatus mq_doob_problem_new(double p,
                                  double c,
                                  uintptr_t grid_points,
                                  double span,
                                  struct MqProblem **out);

/**
 * # Safety
 * `problem` must be null or a handle from this library not yet freed.
 */
void mq_problem_free(struct MqProblem *problem);

/**
 * Number of states; 0 for a null handle.
 *
 * # Safety
 * `problem` must be null or a live handle.
 */
uintptr_t mq_problem_state_count(const struct MqProblem *problem);

/**
 * # Safety
 * `problem` must be null or a live handle.
 */
uintptr_t mq_problem_initial_state(const struct MqProblem *problem);

/**
 * Copies the payoff into `out` (`len` entries available).
 *
 * # Safety
 * `problem` must be a live handle and `out` point to `len` doubles.
 */
enum MqStatus mq_problem_payoff(const struct MqProblem *problem, double *out, uintptr_t len);

/**
 * Iterates to the smallest fixed point above the payoff. `tol <= 0`,
 * `max_iter == 0` and `cap <= 0` select the defaults. The last iterate is
 * written to `out` whatever the status; `iterations` may be null.
 *
 * # Safety
 * `problem` must be a live handle, `out` point to `len` doubles and
 * `iterations` be null or valid.
 */
enum MqStatus mq_solve(const struct MqProblem *problem,
                       double tol,
                       uintptr_t max_iter,
                       double cap,
                       double *out,
                       uintptr_t len,
                       uintptr_t *iterations);

/**
 * Writes `A^horizon f` for the problem's payoff.
 *
 * # Safety
 * `problem` must be a live handle and `out` point to `len` doubles.
 */
enum MqStatus mq_finite_horizon(const struct MqProblem *problem,
                                uintptr_t horizon,
                                double *out,
                                uintptr_t len);

/**
 * Checks `u >= f` and `Au <= u + tol`. Returns `Ok` when both hold and
 * `CheckFailed` otherwise; `worst_gap` receives `max (Au - u)` if non-null.
 *
 * # Safety
 * `problem` must be a live handle, `u` point to `len` doubles and
 * `worst_gap` be null or valid.
 */
enum MqStatus mq_verify_fixed_point(const struct MqProblem *problem,
                                    const double *u,
                                    uintptr_t len,
                                    double tol,
                                    double *worst_gap);

/**
 * Upper concave envelope of the samples `(xs[i], vs[i])` at `query`, with
 * the superdifferential `[lo, hi]`; an undefined side is written as NaN.
 *
 * # Safety
 * `xs` and `vs` must point to `n` doubles; outputs must be valid.
 */
enum MqStatus mq_envelope_at(const double *xs,
                             const double *vs,
                             uintptr_t n,
                             double query,
                             double *value,
                             double *lo,
                             double *hi);

/**
 * Largest mean of `vs` under a probability on `xs` with the given
 * barycenter, by enumeration of supports.
 *
 * # Safety
 * `xs` and `vs` must point to `n` doubles and `out` be valid.
 */
enum MqStatus mq_one_step_lp(const double *xs,
                             const double *vs,
                             uintptr_t n,
                             double barycenter,
                             double *out);

/**
 * Closed-form Doob value at `(x, y)`; `c <= 0` selects the sharp constant.
 *
 * # Safety
 * `out` must be valid.
 */
enum MqStatus mq_doob_closed_form(double p, double c, double x, double y, double *out);

/**
 * Burkholder value at the norm pair `(x1, x2)`.
 *
 * # Safety
 * `out` must be valid.
 */
enum MqStatus mq_burkholder_closed_form(double p, double x1, double x2, double *out);

/**
 * Reduces a martingale tree given as JSON, preserving the moments of
 * orders `1..=q` of the terminal coordinates. On success `out` receives a
 * JSON object `{"tree": ..., "support_before", "support_after", "bound",
 * "moment_error", "martingale_error"}` to be released with
 * [`mq_string_free`].
 *
 * # Safety
 * `tree_json` must be a NUL-terminated string and `out` valid.
 */
enum MqStatus mq_tree_reduce_json(const char *tree_json, uint32_t q, double tol, char **out);

/**
 * # Safety
 * `s` must be null or a string returned by this library not yet freed.
 */
void mq_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MARTINEQ_H */
