#ifndef MA_LAB_H
#define MA_LAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every call.
typedef enum MaStatus {
  MA_STATUS_OK = 0,
  MA_STATUS_NULL_POINTER = 1,
  MA_STATUS_INVALID_ARGUMENT = 2,
  MA_STATUS_NOT_CONVERGED = 3,
  MA_STATUS_BUFFER_TOO_SMALL = 4,
  MA_STATUS_INTERNAL = 5,
} MaStatus;

// Opaque torus grid with its background form and uniform reference measure.
typedef struct MaGrid MaGrid;

// Opaque singular radial profile.
typedef struct MaProfile MaProfile;

// Solver diagnostics returned by [`ma_grid_solve`].
typedef struct MaSolveDiagnostics {
  size_t sweeps;
  double residual;
  double solvability_constant;
  double sup_norm;
  bool converged;
} MaSolveDiagnostics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread; empty if none.
const char *ma_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *ma_version(void);

// Limit of the exponent recurrence in dimension `n` with slack `eps`.
//
// # Safety
// `out` must be valid for one `double` write.
enum MaStatus ma_beta_limit(uint32_t n, double eps, double *out);

// Writes `beta_0..=beta_{k_max}` to `out`. `delta0 > 0` selects the
// geometric schedule `delta0 2^{-k}`, `delta0 = 0` the zero schedule.
//
// # Safety
// `out` must be valid for `len` `double` writes.
enum MaStatus ma_beta_sequence(uint32_t n,
                               double eps,
                               double delta0,
                               size_t k_max,
                               double *out,
                               size_t len);

// `kappa(r)` for the growth `y^m` with unit constants, by quadrature.
//
// # Safety
// `out` must be valid for one `double` write.
enum MaStatus ma_kappa(uint32_t n, double m, double r, double *out);

// Inverse of [`ma_kappa`].
//
// # Safety
// `out` must be valid for one `double` write.
enum MaStatus ma_kappa_inverse(uint32_t n, double m, double t, double *out);

// Builds and validates a profile. On success `*out` owns a handle.
//
// # Safety
// `out` must be valid for one pointer write.
enum MaStatus ma_profile_new(double b,
                             double d,
                             double alpha,
                             uint32_t n,
                             double smoothing_width,
                             struct MaProfile **out);

// # Safety
// `p` must come from [`ma_profile_new`] and not be used afterwards.
void ma_profile_free(struct MaProfile *p);

// Sup distance between the profile and its translate by `h_norm e_1`.
//
// # Safety
// `p` must be a live handle and `out` valid for one `double` write.
enum MaStatus ma_profile_sup_distance(const struct MaProfile *p, double h_norm, double *out);

// L1 distance between the Monge-Ampere densities of the profile and its
// translate by `h_norm e_1`, with the quadrature error estimate.
//
// # Safety
// `p` must be a live handle; `out` and `error_estimate` valid for one
// `double` write each (`error_estimate` may be null).
enum MaStatus ma_profile_l1_distance(const struct MaProfile *p,
                                     double h_norm,
                                     double *out,
                                     double *error_estimate);

// Grid with `size^4` nodes. `cosine_c < 0` selects the flat background,
// `0 <= cosine_c <= 1` the cosine family.
//
// # Safety
// `out` must be valid for one pointer write.
enum MaStatus ma_grid_new(size_t size, double cosine_c, struct MaGrid **out);

// # Safety
// `g` must come from [`ma_grid_new`] and not be used afterwards.
void ma_grid_free(struct MaGrid *g);

// Number of nodes, 0 for a null handle.
//
// # Safety
// `g` must be null or a live handle.
size_t ma_grid_len(const struct MaGrid *g);

// Solves `det(G + Hu) = c f` with `f` of total mass equal to the background
// volume. The potential is written to `u` even when the solver stops
// without converging, in which case `MA_STATUS_NOT_CONVERGED` is returned.
//
// # Safety
// `g` must be a live handle, `f` and `u` valid for `len` doubles, and
// `diagnostics` null or valid for one write.
enum MaStatus ma_grid_solve(const struct MaGrid *g,
                            const double *f,
                            double *u,
                            size_t len,
                            double tol,
                            size_t max_sweeps,
                            struct MaSolveDiagnostics *diagnostics);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MA_LAB_H */
