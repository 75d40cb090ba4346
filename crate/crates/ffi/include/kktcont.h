#ifndef KKTCONT_H
#define KKTCONT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of a call.
typedef enum KktStatus {
  KKT_STATUS_OK = 0,
  // A required pointer argument was null.
  KKT_STATUS_NULL_POINTER = 1,
  // A string argument was not valid UTF-8.
  KKT_STATUS_INVALID_UTF8 = 2,
  // No problem, variant, schedule or quantity of that name.
  KKT_STATUS_UNKNOWN_NAME = 3,
  // An argument was out of range or inconsistent.
  KKT_STATUS_INVALID_ARGUMENT = 4,
  // The numerical computation failed.
  KKT_STATUS_NUMERICAL = 5,
  // The output buffer is too small; the required length was written.
  KKT_STATUS_BUFFER_TOO_SMALL = 6,
  // An internal error (a caught panic).
  KKT_STATUS_INTERNAL = 7,
} KktStatus;

// State of a schedule after a step.
typedef enum KktStageStatus {
  // A stage finished and more remain.
  KKT_STAGE_STATUS_CONTINUE = 0,
  // All stages finished.
  KKT_STAGE_STATUS_DONE = 1,
  // Halted at an MX point.
  KKT_STAGE_STATUS_HALTED_MX = 2,
  // Halted at a domain boundary.
  KKT_STAGE_STATUS_HALTED_BOUNDARY = 3,
  // Halted when the step budget ran out.
  KKT_STAGE_STATUS_HALTED_MAX_STEPS = 4,
} KktStageStatus;

// Opaque problem handle.
typedef struct KktProblem KktProblem;

// Opaque handle of a running schedule preset.
typedef struct KktSchedule KktSchedule;

// Dimensions of a problem.
typedef struct KktDims {
  // Dimension of the solution manifold of the equality constraints.
  size_t d;
  // Number of monitor functions.
  size_t l;
  // Number of inequality constraints.
  size_t q;
  // Number of problem unknowns.
  size_t n_u;
} KktDims;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the most recent error on this thread, or an empty string.
// The pointer stays valid until the next failing call on this thread.
const char *kkt_last_error(void);

// Library version as a static NUL-terminated string.
const char *kkt_version(void);

// The Fischer–Burmeister function `√(a² + b²) − a − b`.
double kkt_fb_chi(double a, double b);

// Builds a registered problem. `variant` may be null for the default.
//
// # Safety
// `name` and `variant` are null or NUL-terminated; `out` is writable.
enum KktStatus kkt_problem_new(const char *name, const char *variant, struct KktProblem **out);

// Releases a problem; null is ignored.
//
// # Safety
// `p` is null or came from [`kkt_problem_new`] and was not freed.
void kkt_problem_free(struct KktProblem *p);

// Writes the dimensions of `p`.
//
// # Safety
// `p` is a live problem handle; `out` is writable.
enum KktStatus kkt_problem_dims(const struct KktProblem *p, struct KktDims *out);

// Evaluates the monitors `Ψ(u)` and inequalities `G(u)` at `u` (length
// `n_u`). `psi` must hold `l` values and `g` must hold `q` values; either
// may be null when not wanted.
//
// # Safety
// `p` is a live handle; `u` holds `n_u` doubles; non-null outputs are
// large enough.
enum KktStatus kkt_problem_eval(const struct KktProblem *p,
                                const double *u,
                                size_t n_u,
                                double *psi,
                                double *g);

// Sets up a registered schedule preset, e.g. (`"doedel"`, `"feasible"`).
//
// # Safety
// `problem` and `schedule` are NUL-terminated; `out` is writable.
enum KktStatus kkt_schedule_new(const char *problem,
                                const char *schedule,
                                struct KktSchedule **out);

// Releases a schedule; null is ignored.
//
// # Safety
// `s` is null or came from [`kkt_schedule_new`] and was not freed.
void kkt_schedule_free(struct KktSchedule *s);

// Runs the next stage.
//
// # Safety
// `s` is a live schedule handle; `out` is writable.
enum KktStatus kkt_schedule_step(struct KktSchedule *s, enum KktStageStatus *out);

// Runs all remaining stages, applying the preset's constraint
// activations at MX halts.
//
// # Safety
// `s` is a live schedule handle; `out` is writable.
enum KktStatus kkt_schedule_run(struct KktSchedule *s, enum KktStageStatus *out);

// Replaces complementarity condition `k` by `G_k = 0` after a halt; the
// next step continues from the halt point.
//
// # Safety
// `s` is a live schedule handle.
enum KktStatus kkt_schedule_activate(struct KktSchedule *s, size_t k);

// Number of completed runs.
//
// # Safety
// `s` is a live schedule handle.
size_t kkt_schedule_runs(const struct KktSchedule *s);

// Value of a named quantity (`mu_J`, `sigma_g1`, `x`, ...) at the current
// point of the schedule.
//
// # Safety
// `s` is a live handle; `name` is NUL-terminated; `out` is writable.
enum KktStatus kkt_schedule_quantity(const struct KktSchedule *s, const char *name, double *out);

// Copies the unknowns `u` of the current point into `buf`. `*len` holds
// the capacity on entry and the number of unknowns on return; a null or
// short buffer gives `BufferTooSmall`.
//
// # Safety
// `s` is a live handle; `len` is writable; `buf` holds `*len` doubles.
enum KktStatus kkt_schedule_point(const struct KktSchedule *s, double *buf, size_t *len);

// Checks the first-order optimality conditions at the current point;
// writes 1 to `pass` when all hold and 0 otherwise.
//
// # Safety
// `s` is a live handle; `pass` is writable.
enum KktStatus kkt_schedule_kkt(const struct KktSchedule *s, int *pass);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KKTCONT_H */
