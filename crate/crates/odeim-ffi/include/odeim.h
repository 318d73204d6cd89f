#ifndef ODEIM_H
#define ODEIM_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Status codes. Zero is success.
 */
typedef enum OdeimStatus {
  ODEIM_STATUS_OK = 0,
  ODEIM_STATUS_NULL_POINTER = 1,
  ODEIM_STATUS_INVALID_LABEL = 2,
  ODEIM_STATUS_UNSUPPORTED = 3,
  ODEIM_STATUS_INVALID_ARGUMENT = 4,
  ODEIM_STATUS_NUMERICAL = 5,
  ODEIM_STATUS_CHECK_FAILED = 6,
  ODEIM_STATUS_PARSE = 7,
  ODEIM_STATUS_BUFFER_TOO_SMALL = 8,
  ODEIM_STATUS_PANIC = 9,
} OdeimStatus;

/**
 * Closed-form contour solutions for the linear potential.
 */
typedef struct OdeimAiry OdeimAiry;

/**
 * A dual affine algebra with its folding data.
 */
typedef struct OdeimAlgebra OdeimAlgebra;

/**
 * Spectral determinants of the ODE with residue `l`, exponent `M` and Weyl word `w`.
 */
typedef struct OdeimQSystem OdeimQSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Owned by the library and
 * valid until the next failing call on the same thread.
 */
const char *odeim_last_error(void);

/**
 * Parse `label` (`B3`, `A5^(2)`, `D43`, ...) into a new algebra handle.
 *
 * # Safety
 * `label` must be a valid C string and `out` writable.
 */
enum OdeimStatus odeim_algebra_new(const char *label, struct OdeimAlgebra **out);

/**
 * # Safety
 * `alg` must come from `odeim_algebra_new` or be NULL.
 */
void odeim_algebra_free(struct OdeimAlgebra *alg);

/**
 * Rank of g and dual Coxeter number.
 *
 * # Safety
 * Pointers must be valid.
 */
enum OdeimStatus odeim_algebra_info(const struct OdeimAlgebra *alg, size_t *rank, int64_t *h_dual);

/**
 * Maximal eigenvalue of Lambda on the fundamental module at 1-based `node`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum OdeimStatus odeim_algebra_lambda(const struct OdeimAlgebra *alg, size_t node, double *out);

/**
 * Build a Q-system. With `ell_re == NULL` the residue is drawn from `seed`; otherwise
 * `ell_re` and `ell_im` hold `n` coefficients. `word` holds `word_len` 1-based Weyl letters.
 *
 * # Safety
 * Arrays must hold the stated number of entries; `out` must be writable.
 */
enum OdeimStatus odeim_qsystem_new(const struct OdeimAlgebra *alg,
                                   double m,
                                   const double *ell_re,
                                   const double *ell_im,
                                   size_t n,
                                   uint64_t seed,
                                   const size_t *word,
                                   size_t word_len,
                                   struct OdeimQSystem **out);

/**
 * # Safety
 * `qs` must come from `odeim_qsystem_new` or be NULL.
 */
void odeim_qsystem_free(struct OdeimQSystem *qs);

/**
 * The residue `l` actually used, as `2 * rank` interleaved doubles.
 *
 * # Safety
 * `out` must hold `cap` complex entries; `len` must be writable.
 */
enum OdeimStatus odeim_qsystem_ell(const struct OdeimQSystem *qs,
                                   double *out,
                                   size_t cap,
                                   size_t *len);

/**
 * `Q^(node)(E)` and, unless `q_tilde` is NULL, `Q~^(node)(E)`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum OdeimStatus odeim_qsystem_q(const struct OdeimQSystem *qs,
                                 size_t node,
                                 double e_re,
                                 double e_im,
                                 double *q,
                                 double *q_tilde);

/**
 * `|product + 1|` of the Bethe equation at a zero of `Q^(node)`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum OdeimStatus odeim_qsystem_bae_residual(const struct OdeimQSystem *qs,
                                            size_t node,
                                            double z_re,
                                            double z_im,
                                            double *out);

/**
 * Contour-integral solver for a twisted algebra.
 *
 * # Safety
 * Pointers must be valid.
 */
enum OdeimStatus odeim_airy_new(const struct OdeimAlgebra *alg, struct OdeimAiry **out);

/**
 * # Safety
 * `h` must come from `odeim_airy_new` or be NULL.
 */
void odeim_airy_free(struct OdeimAiry *h);

/**
 * `Psi_k(x)`, written as interleaved doubles; `len` receives the dimension.
 *
 * # Safety
 * `out` must hold `cap` complex entries; `len` must be writable.
 */
enum OdeimStatus odeim_airy_psi(const struct OdeimAiry *h,
                                double x_re,
                                double x_im,
                                int64_t k,
                                double *out,
                                size_t cap,
                                size_t *len);

/**
 * `Q^(node)(E)` of the linear potential, 1-based node with an integral formula.
 *
 * # Safety
 * Pointers must be valid.
 */
enum OdeimStatus odeim_airy_q(const struct OdeimAiry *h,
                              size_t node,
                              double e_re,
                              double e_im,
                              double *q);

/**
 * Run a command-line subcommand. `argv` excludes the program name. On success
 * `*report` receives the serialised report, to be released with `odeim_string_free`,
 * and `*ok` whether every check passed.
 *
 * # Safety
 * `argv` must hold `argc` valid C strings; `report` and `ok` must be writable.
 */
enum OdeimStatus odeim_run(size_t argc, const char *const *argv, char **report, bool *ok);

/**
 * Release a string returned by `odeim_run`.
 *
 * # Safety
 * `s` must come from `odeim_run` or be NULL.
 */
void odeim_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ODEIM_H */
