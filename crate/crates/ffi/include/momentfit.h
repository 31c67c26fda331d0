#ifndef MOMENTFIT_H
#define MOMENTFIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

// Result code of every call.
typedef enum MfStatus {
  MF_STATUS_OK = 0,
  // Malformed or inconsistent arguments, files or models.
  MF_STATUS_INVALID_INPUT = 1,
  // Numerical failure: ill-conditioned Gram matrix, divergent quadrature, …
  MF_STATUS_NUMERICAL = 2,
  MF_STATUS_NULL_POINTER = 3,
  // Real weights where complex ones were required, or the reverse.
  MF_STATUS_WEIGHT_KIND = 4,
  MF_STATUS_OUT_OF_DOMAIN = 5,
  MF_STATUS_IO = 6,
  // A Rust panic was caught at the boundary.
  MF_STATUS_INTERNAL = 7,
} MfStatus;

typedef enum MfNormalization {
  MF_NORMALIZATION_NONE = 0,
  MF_NORMALIZATION_LAGRANGE = 1,
  MF_NORMALIZATION_POSTHOC = 2,
} MfNormalization;

// Opaque basis family.
typedef struct MfFamily MfFamily;

// Opaque fitted density.
typedef struct MfModel MfModel;

// Opaque weighted sample.
typedef struct MfSample MfSample;

// Options for `mf_fit`; `kernel_eps <= 0` disables the kernel correction.
typedef struct MfFitOptions {
  enum MfNormalization normalization;
  // Constraint value for `MF_NORMALIZATION_LAGRANGE`.
  double normalization_constant;
  double kernel_eps;
  // Solve with the Gram matrix instead of assuming orthonormality.
  bool solve_gram;
} MfFitOptions;

typedef struct MfPrngResult {
  double statistic;
  double z;
  double p_value;
} MfPrngResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. Valid until the next failing call.
const char *mf_last_error_message(void);

// Releases a string returned by this library.
void mf_string_free(char *s);

// Normalized Legendre polynomials of degree `0..=order` on `[lo, hi]`.
enum MfStatus mf_family_legendre(size_t order, double lo, double hi, struct MfFamily **out);

// Fourier basis with frequencies up to `max_freq` on `[lo, hi]`.
enum MfStatus mf_family_fourier(size_t max_freq, double lo, double hi, struct MfFamily **out);

// Hermite functions of order `0..=order` on the real line.
enum MfStatus mf_family_hermite(size_t order, struct MfFamily **out);

// Tensor product of `count` one-dimensional families (the factors stay owned by the caller).
enum MfStatus mf_family_tensor(const struct MfFamily *const *factors,
                               size_t count,
                               struct MfFamily **out);

enum MfStatus mf_family_size(const struct MfFamily *family, size_t *size);

enum MfStatus mf_family_dim(const struct MfFamily *family, size_t *dim);

void mf_family_free(struct MfFamily *family);

// Sample of `n` points stored row-major in `points` (`n·dim` values).
//
// `weights` holds `n` real weights, or is NULL for unit weights.
enum MfStatus mf_sample_new(size_t dim,
                            const double *points,
                            size_t n,
                            const double *weights,
                            struct MfSample **out);

// Sample with complex weights `re[k] + i·im[k]`.
enum MfStatus mf_sample_new_complex(size_t dim,
                                    const double *points,
                                    size_t n,
                                    const double *re,
                                    const double *im,
                                    struct MfSample **out);

void mf_sample_free(struct MfSample *sample);

// Default options: no normalization, no kernel correction, orthonormal family assumed.
struct MfFitOptions mf_fit_options_default(void);

// Fits `family` to `sample`; `options` may be NULL for the defaults.
enum MfStatus mf_fit(const struct MfSample *sample,
                     const struct MfFamily *family,
                     const struct MfFitOptions *options,
                     struct MfModel **out);

// `true` when the model carries complex coefficients.
enum MfStatus mf_model_is_complex(const struct MfModel *model, bool *is_complex);

enum MfStatus mf_model_dim(const struct MfModel *model, size_t *dim);

// Copies the coefficients into `re` (and `im`, which may be NULL for real models); both hold `len` values.
enum MfStatus mf_model_coefficients(const struct MfModel *model,
                                    double *re,
                                    double *im,
                                    size_t len);

enum MfStatus mf_model_coefficient_count(const struct MfModel *model, size_t *len);

// `ρ(x)`; `im` may be NULL.
enum MfStatus mf_model_eval(const struct MfModel *model,
                            const double *x,
                            size_t dim,
                            double *re,
                            double *im);

// `∫ρ = Σ a_i F_i`; `im` may be NULL.
enum MfStatus mf_model_integrate(const struct MfModel *model, double *re, double *im);

// Sign label of a real model: `1`, `-1`, or `0` on the boundary.
enum MfStatus mf_model_classify_sign(const struct MfModel *model,
                                     const double *x,
                                     size_t dim,
                                     int *label);

// Argument class `0..classes` of a complex model, or `-1` when undecided.
enum MfStatus mf_model_classify_argument(const struct MfModel *model,
                                         const double *x,
                                         size_t dim,
                                         size_t classes,
                                         int *label);

// Model as JSON text; release with `mf_string_free`.
enum MfStatus mf_model_to_json(const struct MfModel *model, char **out);

enum MfStatus mf_model_save(const struct MfModel *model, const char *path);

enum MfStatus mf_model_load(const char *path, struct MfModel **out);

void mf_model_free(struct MfModel *model);

// Product-of-centred-coordinates statistic over `n_tuples` non-overlapping `dim`-tuples of `values`.
enum MfStatus mf_prng_test(const double *values,
                           size_t len,
                           size_t dim,
                           size_t n_tuples,
                           struct MfPrngResult *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MOMENTFIT_H */
