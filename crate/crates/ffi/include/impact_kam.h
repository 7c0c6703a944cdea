/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef IMPACT_KAM_H
#define IMPACT_KAM_H

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

// Result of every fallible call.
typedef enum IkStatus {
  IK_STATUS_OK = 0,
  IK_STATUS_NULL_POINTER = 1,
  IK_STATUS_INVALID_PARAMETER = 2,
  IK_STATUS_GRAZING = 3,
  IK_STATUS_NO_CONVERGENCE = 4,
  IK_STATUS_DOMAIN_ESCAPE = 5,
  IK_STATUS_SMALL_DIVISOR = 6,
  IK_STATUS_KAM_FAILED = 7,
  IK_STATUS_PANIC = 8,
} IkStatus;

// Which half-plane an impact time starts in.
typedef enum IkSide {
  IK_SIDE_RIGHT = 0,
  IK_SIDE_LEFT = 1,
} IkSide;

typedef enum IkRootMethod {
  IK_ROOT_METHOD_NEWTON = 0,
  IK_ROOT_METHOD_FIXED_POINT = 1,
} IkRootMethod;

// Coordinates of the map whose Jacobian is requested.
typedef enum IkMapKind {
  // `(t₀, y₀)`.
  IK_MAP_KIND_VELOCITY = 0,
  // `(t₀, E₀)` with `E = -y²/2`.
  IK_MAP_KIND_ENERGY = 1,
} IkMapKind;

// Opaque invariant curve in section coordinates.
typedef struct IkCurve IkCurve;

// Opaque forcing `p(t)`.
typedef struct IkForcing IkForcing;

// Opaque oscillator: forcing plus `ε`.
typedef struct IkOscillator IkOscillator;

// One impact-map step and its perturbative split.
typedef struct IkImpact {
  double t_bar;
  double y_bar;
  double alpha;
  double f_t0;
  double f_y0;
} IkImpact;

// `τ = τ₀ + ε τ*`.
typedef struct IkImpactTime {
  double tau;
  double tau0;
  double tau_star;
  size_t iterations;
} IkImpactTime;

// Summary of a curve solve.
typedef struct IkKamSummary {
  size_t iterations;
  double final_error;
  bool quadratic_decay;
  // Measured rotation in radians per iterate; NaN when not measured.
  double rotation;
  double y0_star;
} IkKamSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *ik_version(void);

// Copies the calling thread's last error message into `buf` (truncated,
// always NUL-terminated when `len > 0`). Returns the full message length
// excluding the terminator.
//
// # Safety
// `buf` must be NULL or point to `len` writable bytes.
size_t ik_last_error_message(char *buf, size_t len);

// Builds `p(t) = a0 + Σ cos[k-1] cos kt + sin[k-1] sin kt`.
//
// # Safety
// `cos` and `sin` must point to `n_cos` and `n_sin` doubles (or be NULL when
// the count is 0); `out` must be a valid pointer.
enum IkStatus ik_forcing_new(double a0,
                             const double *cos,
                             size_t n_cos,
                             const double *sin,
                             size_t n_sin,
                             double rho,
                             struct IkForcing **out);

// # Safety
// `f` must be NULL or a handle from [`ik_forcing_new`] not yet freed.
void ik_forcing_free(struct IkForcing *f);

// `p̃`, the largest strip norm of the forcing antiderivative family.
//
// # Safety
// `f` must be a live forcing handle and `out` a valid pointer.
enum IkStatus ik_forcing_p_tilde(const struct IkForcing *f, double *out);

// # Safety
// `forcing` must be a live handle and `out` a valid pointer. The forcing
// may be freed afterwards; the oscillator keeps its own copy.
enum IkStatus ik_oscillator_new(const struct IkForcing *forcing,
                                double epsilon,
                                struct IkOscillator **out);

// # Safety
// `o` must be NULL or a handle from [`ik_oscillator_new`] not yet freed.
void ik_oscillator_free(struct IkOscillator *o);

// One step of the impact map from `(t0, y0)`, `y0 > 0`.
//
// # Safety
// `o` must be a live oscillator and `out` a valid pointer.
enum IkStatus ik_impact_map(const struct IkOscillator *o,
                            double t0,
                            double y0,
                            struct IkImpact *out);

// The impact map in `(t, E)` coordinates.
//
// # Safety
// `o` must be a live oscillator; `t_bar` and `e_bar` valid pointers.
enum IkStatus ik_impact_map_energy(const struct IkOscillator *o,
                                   double t0,
                                   double e0,
                                   double *t_bar,
                                   double *e_bar);

// First return time to `x = 0` from `(t, 0, y)`.
//
// # Safety
// `o` must be a live oscillator and `out` a valid pointer.
enum IkStatus ik_impact_time(const struct IkOscillator *o,
                             enum IkSide side,
                             double t,
                             double y,
                             enum IkRootMethod method,
                             struct IkImpactTime *out);

// Row-major 2×2 Jacobian at `(angle, action)` written to `out[0..4]`.
//
// # Safety
// `o` must be a live oscillator and `out` point to 4 writable doubles.
enum IkStatus ik_jacobian(const struct IkOscillator *o,
                          enum IkMapKind kind,
                          double angle,
                          double action,
                          bool analytic,
                          double *out);

// Solves for the invariant curve of rotation `omega` (radians per impact)
// near `y₀* = ω(1 - a₀²ε²)/4` with `order` Fourier modes. `tol <= 0`
// selects the default tolerance. `summary` may be NULL.
//
// # Safety
// `o` must be a live oscillator, `out` a valid pointer, `summary` NULL or
// valid.
enum IkStatus ik_solve_curve(const struct IkOscillator *o,
                             double omega,
                             size_t order,
                             double tol,
                             struct IkCurve **out,
                             struct IkKamSummary *summary);

// Point `(t, y)` of the curve at parameter `theta`.
//
// # Safety
// `c` must be a live curve; `t` and `y` valid pointers.
enum IkStatus ik_curve_point(const struct IkCurve *c, double theta, double *t, double *y);

// Height `y` of the curve above the section time `t`.
//
// # Safety
// `c` must be a live curve and `y` a valid pointer.
enum IkStatus ik_curve_y_at(const struct IkCurve *c, double t, double *y);

// Rotation number the curve was solved for; NaN for a NULL handle.
//
// # Safety
// `c` must be NULL or a live curve.
double ik_curve_omega(const struct IkCurve *c);

// # Safety
// `c` must be NULL or a handle from [`ik_solve_curve`] not yet freed.
void ik_curve_free(struct IkCurve *c);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IMPACT_KAM_H */
