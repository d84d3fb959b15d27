#ifndef LORENTZKIT_H
#define LORENTZKIT_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define LK_OK 0

#define LK_NULL_POINTER -1

#define LK_INVALID_ARGUMENT -2

/**
 * Point outside the chart domain or singular there.
 */
#define LK_DOMAIN -3

/**
 * Numerical failure: blow-up, caustic, singular matrix, too few samples.
 */
#define LK_NUMERICAL -4

#define LK_BUFFER_TOO_SMALL -5

#define LK_PANIC -6

#define LK_CHART_BOYER_LINDQUIST 0

#define LK_CHART_INGOING 1

/**
 * A metric in a fixed chart.
 */
typedef struct LkMetric LkMetric;

/**
 * A finished run: its JSON report and verdict.
 */
typedef struct LkReport LkReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Kerr with mass `m` and spin `a` (0 <= a < m) in Boyer–Lindquist or ingoing coordinates.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
int32_t lk_metric_kerr(double m, double a, int32_t chart, struct LkMetric **out);

/**
 * Minkowski space in Cartesian coordinates (t, x, y, z).
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
int32_t lk_metric_minkowski(struct LkMetric **out);

/**
 * Releases a metric handle. Null is ignored.
 *
 * # Safety
 * `h` must come from an `lk_metric_*` constructor and not be used afterwards.
 */
void lk_metric_free(struct LkMetric *h);

/**
 * Number of coordinates.
 *
 * # Safety
 * `h` must be a live handle and `out` writable.
 */
int32_t lk_metric_dim(const struct LkMetric *h, size_t *out);

/**
 * Row-major components g_ab at `x` (`n` coordinates) into `g`, which holds n² values.
 *
 * # Safety
 * `x` must point to `n` readable values and `g` to `n * n` writable ones.
 */
int32_t lk_metric_components(const struct LkMetric *h, const double *x, size_t n, double *g);

/**
 * max|Ric| and max|Riemann| (all indices down) at `x`.
 *
 * # Safety
 * `x` must point to `n` readable values; the out-pointers must be writable.
 */
int32_t lk_ricci_residual(const struct LkMetric *h,
                          const double *x,
                          size_t n,
                          double *ricci_max,
                          double *riemann_max);

/**
 * Copies the hex SHA-256 of the component expressions (64 characters plus NUL).
 *
 * # Safety
 * `buf` must point to `len` writable bytes.
 */
int32_t lk_metric_hash(const struct LkMetric *h, char *buf, size_t len);

/**
 * Φ at p′ for one ε of the obstruction experiment at θ₀ on Kerr(m, a).
 * `blowup` is set to 1 when the frame system blew up before p′.
 *
 * # Safety
 * The out-pointers must be writable.
 */
int32_t lk_obstruction_phi(double m,
                           double a,
                           double theta0,
                           double eps,
                           double *phi,
                           int32_t *blowup);

/**
 * Runs a command described by a TOML run configuration (the same keys as
 * the command-line config file) and returns its report.
 *
 * # Safety
 * `config` must be a NUL-terminated string and `out` writable.
 */
int32_t lk_run(const char *config, struct LkReport **out);

/**
 * 1 when every check of the report passed, 0 otherwise.
 *
 * # Safety
 * `r` must be a live report handle and `passed` writable.
 */
int32_t lk_report_passed(const struct LkReport *r, int32_t *passed);

/**
 * The report as JSON. The string is owned by the report and lives until `lk_report_free`.
 *
 * # Safety
 * `r` must be a live report handle.
 */
const char *lk_report_json(const struct LkReport *r);

/**
 * Releases a report. Null is ignored.
 *
 * # Safety
 * `r` must come from `lk_run` and not be used afterwards.
 */
void lk_report_free(struct LkReport *r);

/**
 * Copies the message of the last failure on this thread (empty if none).
 *
 * # Safety
 * `buf` must point to `len` writable bytes.
 */
int32_t lk_last_error(char *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LORENTZKIT_H */
