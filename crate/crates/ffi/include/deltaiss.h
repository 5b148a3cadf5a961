#ifndef DELTAISS_H
#define DELTAISS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

// Result of every fallible call.
typedef enum DissStatus {
  DISS_STATUS_OK = 0,
  DISS_STATUS_NULL_POINTER = 1,
  DISS_STATUS_INVALID_INPUT = 2,
  DISS_STATUS_PARSE = 3,
  // The condition could not be established within the solver budget.
  DISS_STATUS_NOT_CERTIFIED = 4,
  DISS_STATUS_NOT_SYNTHESIZED = 5,
  DISS_STATUS_STRUCTURAL_OBSTRUCTION = 6,
  DISS_STATUS_NUMERICAL = 7,
  DISS_STATUS_BUFFER_TOO_SMALL = 8,
  DISS_STATUS_PANIC = 9,
} DissStatus;

// A validated Lyapunov certificate for a particular model.
typedef struct DissCertificate DissCertificate;

// A loaded model in the generic form.
typedef struct DissModel DissModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. Valid until the
// next call into this library on the same thread.
const char *diss_last_error(void);

// Static version string of the toolkit.
const char *diss_version(void);

// Frees a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void diss_string_free(char *s);

// Parses a model file from a JSON string.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum DissStatus diss_model_from_json(const char *json, struct DissModel **out);

// Builds a generic model `x⁺ = f(Ax + Bu)`, `y = Cx + Du` from row-major
// buffers. `activations` holds `n` NUL-terminated names (`identity`,
// `tanh`, `sigmoid`, `relu`).
//
// # Safety
// Buffers must hold `n·n`, `n·m`, `l·n` and `l·m` values; `activations`
// must point to `n` valid strings; `out` must be writable.
enum DissStatus diss_model_new(size_t n,
                               size_t m,
                               size_t l,
                               const double *a,
                               const double *b,
                               const double *c,
                               const double *d,
                               const char *const *activations,
                               struct DissModel **out);

// Frees a model. NULL is ignored.
//
// # Safety
// `model` must come from this library and not have been freed.
void diss_model_free(struct DissModel *model);

// State, input and output dimensions of the lifted generic form.
//
// # Safety
// `model` must be a live handle; the output pointers may be NULL.
enum DissStatus diss_model_dims(const struct DissModel *model, size_t *n, size_t *m, size_t *l);

// Searches for a structured Lyapunov certificate. `margin < 0` and
// `budget = 0` select the defaults. [`DissStatus::NotCertified`] means the
// condition was not established, not that the model is unstable.
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum DissStatus diss_certify(const struct DissModel *model,
                             double margin,
                             size_t budget,
                             struct DissCertificate **out);

// Frees a certificate. NULL is ignored.
//
// # Safety
// `cert` must come from this library and not have been freed.
void diss_certificate_free(struct DissCertificate *cert);

// `λmax(ÃᵀPÃ − P)` of the certificate, negative. NaN for a NULL handle.
//
// # Safety
// `cert` must be a live handle or NULL.
double diss_certificate_gap(const struct DissCertificate *cert);

// Dimension of the certificate matrix, 0 for a NULL handle.
//
// # Safety
// `cert` must be a live handle or NULL.
size_t diss_certificate_dim(const struct DissCertificate *cert);

// Copies `P` into `buf` (row-major, `n·n` values).
//
// # Safety
// `cert` must be a live handle; `buf` must hold `len` values.
enum DissStatus diss_certificate_p(const struct DissCertificate *cert, double *buf, size_t len);

// Serializes the certificate file. Free the result with [`diss_string_free`].
//
// # Safety
// `cert` must be a live handle; `out` must be writable.
enum DissStatus diss_certificate_to_json(const struct DissCertificate *cert, char **out);

// Checks a candidate `P` (row-major `n·n`) against the model. `passed` is
// set to 1 when the certificate is valid and 0 otherwise; `gap` receives
// `λmax(ÃᵀPÃ − P)`. Both outputs may be NULL.
//
// # Safety
// `model` must be a live handle; `p` must hold `n·n` values.
enum DissStatus diss_validate(const struct DissModel *model,
                              const double *p,
                              size_t n,
                              int32_t *passed,
                              double *gap);

// Simulates `steps` steps from `x0` (`n` values) under `inputs`
// (`steps·m`, row per step) and writes `steps·l` outputs.
//
// # Safety
// `model` must be a live handle and the buffers must have the stated sizes.
enum DissStatus diss_simulate(const struct DissModel *model,
                              const double *x0,
                              const double *inputs,
                              size_t steps,
                              double *outputs);

// Designs a gain for an architecture file given as JSON and returns the
// gains file as JSON. Free the result with [`diss_string_free`].
//
// # Safety
// `architecture_json` must be a NUL-terminated string; `out` must be writable.
enum DissStatus diss_synthesize(const char *architecture_json,
                                double margin,
                                size_t budget,
                                char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DELTAISS_H */
