/* C ABI for the eqmanifold equilibrium-manifold geometry engine.
 *
 * Economies are opaque handles created from the same JSON config the `eqm`
 * CLI accepts, e.g.
 *
 *   {"family": "tanh-sin", "L": 3, "params": {"a": 0.5}, "domain": [-3, 3]}
 *
 * Buffer sizes are fixed by the number of goods L (eqm_economy_goods):
 *   ambient vectors        2L-1 doubles
 *   metric / inverse       L*L doubles, row-major
 *   christoffel tensor     L*L*L doubles, gamma[k][i][j] row-major
 *   chart coordinates      L doubles, (t, alpha_1, ..., alpha_{L-1})
 *
 * Every fallible call returns an EqmStatus; on failure eqm_last_error()
 * holds a thread-local description valid until the next failing call.
 */

#ifndef EQMANIFOLD_H
#define EQMANIFOLD_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum EqmStatus {
  EQM_OK = 0,
  EQM_ERR_DOMAIN = 1,
  EQM_ERR_VALIDATION = 2,
  EQM_ERR_SINGULAR_METRIC = 3,
  EQM_ERR_DEGENERATE_PLANE = 4,
  EQM_ERR_DOMAIN_EXIT = 5,
  EQM_ERR_STIFFNESS = 6,
  EQM_ERR_NON_CONVERGENCE = 7,
  EQM_ERR_REFINEMENT_STALL = 8,
  EQM_ERR_NULL_POINTER = 9,
  EQM_ERR_PANIC = 10,
} EqmStatus;

/* Opaque economy handle. */
typedef struct EqmEconomy EqmEconomy;

/* Library version as a static NUL-terminated string. */
const char *eqm_version(void);

/* Thread-local message for the most recent failure. */
const char *eqm_last_error(void);

/* Builds an economy from a JSON config; NULL on failure (see
 * eqm_last_error). Free with eqm_economy_free. */
EqmEconomy *eqm_economy_from_json(const char *json);

/* Releases a handle; NULL is a no-op. */
void eqm_economy_free(EqmEconomy *econ);

/* Number of goods L; 0 for NULL. */
size_t eqm_economy_goods(const EqmEconomy *econ);

/* Embedding of (t, alpha) into R^{2L-1}. alpha: L-1 doubles. */
EqmStatus eqm_embed(const EqmEconomy *econ, double t, const double *alpha,
                    double *ambient_out);

/* Induced metric, closed-form inverse and determinant at (t, alpha).
 * g_inv_out and det_out may be NULL. */
EqmStatus eqm_metric(const EqmEconomy *econ, double t, const double *alpha,
                     double *g_out, double *g_inv_out, double *det_out);

/* Christoffel symbols gamma[k][i][j], L*L*L doubles. */
EqmStatus eqm_christoffel(const EqmEconomy *econ, double t, const double *alpha,
                          double *gamma_out);

/* Sectional-curvature report: inner_r_out and sec_0i_out hold L-1 doubles,
 * sec_ij_max_abs_out one double. */
EqmStatus eqm_curvature(const EqmEconomy *econ, double t, const double *alpha,
                        double *inner_r_out, double *sec_0i_out,
                        double *sec_ij_max_abs_out);

/* Exponential map: geodesic from (t, alpha) with initial velocity coeffs
 * (L doubles) to parameter 1. end_coords_out: L doubles; speed_drift_out
 * may be NULL. */
EqmStatus eqm_exp_map(const EqmEconomy *econ, double t, const double *alpha,
                      const double *coeffs, double *end_coords_out,
                      double *speed_drift_out);

/* Log map: tangent coefficients at (tx, alpha_x) reaching (ty, alpha_y).
 * coeffs_out: L doubles. */
EqmStatus eqm_log_map(const EqmEconomy *econ, double tx, const double *alpha_x,
                      double ty, const double *alpha_y, double *coeffs_out);

/* Price selection after perturbing the endowment to omega_prime (L doubles).
 * landed_coords_out: L doubles; price_out: L-1 doubles; residual_out and
 * iterations_out may be NULL. */
EqmStatus eqm_select(const EqmEconomy *econ, double t, const double *alpha,
                     const double *omega_prime, bool refine,
                     double *landed_coords_out, double *price_out,
                     double *residual_out, uint64_t *iterations_out);

/* Equilibrium parameters t supporting a fixed endowment (L doubles), sorted
 * ascending. Writes min(count, cap) roots; *count_out is the total count. */
EqmStatus eqm_find_equilibria(const EqmEconomy *econ, const double *endowment,
                              double *t_roots_out, size_t cap,
                              size_t *count_out);

/* Zero-curvature/uniqueness equivalence over the certified domain. */
EqmStatus eqm_uniqueness(const EqmEconomy *econ, bool *unique_out,
                         double *max_abs_p_prime_out,
                         double *max_abs_inner_r_out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* EQMANIFOLD_H */
