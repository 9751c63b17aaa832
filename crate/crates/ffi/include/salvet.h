#ifndef SALVET_H
#define SALVET_H

/* Generated from the salvet-ffi crate sources; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SvStatus {
  SV_STATUS_OK = 0,
  SV_STATUS_INVALID_ARGUMENT = 1,
  SV_STATUS_CONFIG = 2,
  SV_STATUS_PARSE = 3,
  SV_STATUS_NUMERIC = 4,
  SV_STATUS_IO = 5,
  SV_STATUS_NULL_POINTER = 6,
  SV_STATUS_PANIC = 7,
} SvStatus;

/*
 Opaque trained-model handle. Create with `sv_model_build` or
 `sv_model_load`, release with `sv_model_free`.
 */
typedef struct SvModel SvModel;

/*
 Six-statistic angular-error summary.
 */
typedef struct SvErrorSummary {
  double mean;
  double median;
  double trimean;
  double best25;
  double worst25;
  double worst5;
  size_t n;
} SvErrorSummary;

/*
 Welch test outcome.
 */
typedef struct SvTestResult {
  double statistic;
  double df;
  double p;
} SvTestResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the most recent failure on this thread. Never null;
 empty before the first failure. Invalidated by the next failing call.
 */
const char *sv_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *sv_version(void);

/*
 Build a model from a JSON spec (same schema as the TOML/JSON model
 config: saliencyType, saliencyDims, optional contextual flags,
 backbone, hiddenSize, kernelSize). Identical (spec, seed) pairs
 produce bit-identical parameters.

 # Safety
 `spec_json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SvStatus sv_model_build(const char *spec_json, uint64_t seed, struct SvModel **out);

/*
 Load a checkpoint written by `sv_model_save` (or the Rust API).

 # Safety
 `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SvStatus sv_model_load(const char *path, struct SvModel **out);

/*
 Save the model's checkpoint to `path`.

 # Safety
 `model` must come from this library and `path` must be NUL-terminated.
 */
enum SvStatus sv_model_save(const struct SvModel *model, const char *path);

/*
 Release a model handle. Null is a no-op.

 # Safety
 `model` must come from this library and not be freed twice.
 */
void sv_model_free(struct SvModel *model);

/*
 FNV-1a checksum over the model's parameters, for quick equality checks.

 # Safety
 `model` must come from this library; `out` must be a valid pointer.
 */
enum SvStatus sv_model_checksum(const struct SvModel *model, uint64_t *out);

/*
 Spec code of the model (e.g. "C-S", "A-ST.ncs"), written NUL-terminated
 into `buf`. Fails with SV_STATUS_INVALID_ARGUMENT if `cap` is too small.

 # Safety
 `buf` must point to at least `cap` writable bytes.
 */
enum SvStatus sv_model_code(const struct SvModel *model, char *buf, size_t cap);

/*
 Predict the final-frame illuminant for a sequence of `t` RGB frames,
 laid out as one contiguous `t * 3 * h * w` array (frame, channel,
 row, column), values in [0,1]. Writes a unit-norm RGB triple.

 # Safety
 `frames` must hold `t*3*h*w` doubles, `seq_id` must be NUL-terminated,
 `out_rgb` must hold 3 doubles.
 */
enum SvStatus sv_model_predict(const struct SvModel *model,
                               const double *frames,
                               size_t t,
                               size_t h,
                               size_t w,
                               const char *seq_id,
                               double *out_rgb);

/*
 Angular error in degrees between two RGB triples (scale-invariant).

 # Safety
 `a` and `b` must each hold 3 doubles; `out` must be a valid pointer.
 */
enum SvStatus sv_angular_error(const double *a, const double *b, double *out);

/*
 Summarize a set of angular errors into the six standard statistics.

 # Safety
 `errors` must hold `len` doubles; `out` must be a valid pointer.
 */
enum SvStatus sv_error_summary(const double *errors, size_t len, struct SvErrorSummary *out);

/*
 Jensen-Shannon divergence (natural log) between two nonnegative
 weight vectors, normalized internally. Bounded by ln 2.

 # Safety
 `p` and `q` must each hold `len` doubles; `out` must be valid.
 */
enum SvStatus sv_jsd(const double *p, const double *q, size_t len, double *out);

/*
 Welch's unequal-variance t test between two samples.

 # Safety
 `a` must hold `na` doubles and `b` `nb` doubles; `out` must be valid.
 */
enum SvStatus sv_welch_t(const double *a,
                         size_t na,
                         const double *b,
                         size_t nb,
                         struct SvTestResult *out);

/*
 Benjamini-Hochberg step-up adjustment. Writes `len` adjusted p-values
 and, when `out_significant` is non-null, `len` 0/1 flags for
 significance at `alpha`.

 # Safety
 `ps` must hold `len` doubles; `out_adjusted` must hold `len` doubles;
 `out_significant`, when non-null, must hold `len` bytes.
 */
enum SvStatus sv_bh_adjust(const double *ps,
                           size_t len,
                           double alpha,
                           double *out_adjusted,
                           uint8_t *out_significant);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SALVET_H */
