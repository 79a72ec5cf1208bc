/* C interface for the lobq order-position/queue analytics engines.
 *
 * Conventions:
 *   - every fallible call returns lobq_status; LOBQ_OK is 0;
 *   - out-parameters are written only on success;
 *   - handles are created by *_new and released by the matching *_free;
 *   - lobq_last_error_message() returns a thread-local string valid until
 *     the next failing call on the same thread.
 *
 * Kept in sync with the Rust implementation by a unit test; regenerable
 * with cbindgen (see cbindgen.toml).
 */

#ifndef LOBQ_H
#define LOBQ_H

#include <stdint.h>
#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum lobq_status {
  LOBQ_OK = 0,
  LOBQ_ERR_NULL_POINTER = 1,
  LOBQ_ERR_INVALID_ARGUMENT = 2,
  LOBQ_ERR_DOMAIN = 3,
  LOBQ_ERR_NUMERIC = 4,
  LOBQ_ERR_IO = 5,
} lobq_status;

typedef enum lobq_arrival_kind {
  LOBQ_ARRIVAL_POISSON = 0,
  LOBQ_ARRIVAL_HAWKES_EXP = 1,
  LOBQ_ARRIVAL_COX_SHOT_NOISE = 2,
  LOBQ_ARRIVAL_LINEAR_STATE_DEPENDENT = 3,
} lobq_arrival_kind;

/* Meaning of the params depends on kind:
 *   Poisson: p0 = rate.
 *   Hawkes:  p0 = baseline, p1 = amplitude, p2 = decay.
 *   Cox:     p0 = baseline, p1 = shot_rate, p2 = shot_amplitude, p3 = shot_decay.
 *   Linear:  p0 = base, p1 = ask_coeff, p2 = bid_coeff.
 */
typedef struct lobq_arrival_spec {
  lobq_arrival_kind kind;
  double p0;
  double p1;
  double p2;
  double p3;
} lobq_arrival_spec;

typedef enum lobq_size_law_kind {
  LOBQ_SIZE_CONSTANT = 0,
  LOBQ_SIZE_EXPONENTIAL = 1,
  LOBQ_SIZE_GEOMETRIC = 2,
  LOBQ_SIZE_LOGNORMAL = 3,
} lobq_size_law_kind;

/* constant(value = p0), exponential(mean = p0), geometric(mean = p0),
 * lognormal(mu = p0, sigma = p1). */
typedef struct lobq_size_law {
  lobq_size_law_kind kind;
  double p0;
  double p1;
} lobq_size_law;

/* Opaque handles. */
typedef struct lobq_marks lobq_marks;
typedef struct lobq_fluid lobq_fluid;
typedef struct lobq_diffusion lobq_diffusion;

/* Message for the most recent error on this thread ("" if none). */
const char *lobq_last_error_message(void);

/* Stationary rate and counting-CLT variance of an arrival spec. */
lobq_status lobq_arrival_constants(const lobq_arrival_spec *spec,
                                   double *out_lambda,
                                   double *out_vd2);

/* Simulate an arrival stream on [0, horizon]; *out_times must be released
 * with lobq_free_f64_array(*out_times, *out_len). */
lobq_status lobq_simulate_events(const lobq_arrival_spec *spec,
                                 double horizon,
                                 uint64_t seed,
                                 double **out_times,
                                 size_t *out_len);

void lobq_free_f64_array(double *ptr, size_t len);

/* Mark model over the six order types (probabilities sum to 1). */
lobq_status lobq_marks_new(const double *probabilities /* [6] */,
                           const lobq_size_law *laws /* [6] */,
                           lobq_marks **out);

void lobq_marks_free(lobq_marks *handle);

/* Fluid limit of (Q_b, Q_a, Z) with mean marks vbar[6]. */
lobq_status lobq_fluid_new(double lambda,
                           const double *vbar /* [6] */,
                           double qb0,
                           double qa0,
                           double z0,
                           lobq_fluid **out);

void lobq_fluid_free(lobq_fluid *handle);

/* out[0..3] = (Q_b(t), Q_a(t), Z(t)). */
lobq_status lobq_fluid_eval(const lobq_fluid *handle, double t, double *out);

/* out[0..4] = (tau_a, tau_b, tau_z, tau); +INFINITY when never reached. */
lobq_status lobq_fluid_hitting_times(const lobq_fluid *handle, double *out);

/* Z(t) under the cancellation profile Y(x) = x^gamma, gamma >= 1. */
lobq_status lobq_fluid_position_general_power(const lobq_fluid *handle,
                                              double gamma,
                                              double t,
                                              double *out);

/* Execution time tau_z under the power profile. */
lobq_status lobq_fluid_general_tau_z(const lobq_fluid *handle,
                                     double gamma,
                                     double *out);

/* Diffusion parameters from marks + arrival constants + initial queues.
 * psi_convention: 0 = diffusion-theorem lambda power, 1 = lambda^3. */
lobq_status lobq_diffusion_new(const lobq_marks *marks,
                               double lambda,
                               double vd2,
                               int psi_convention,
                               double qb,
                               double qa,
                               lobq_diffusion **out);

void lobq_diffusion_free(lobq_diffusion *handle);

/* out[0..8] = (mu1, mu2, rho, sigma1, sigma2, alpha, r0, theta0). */
lobq_status lobq_diffusion_geometry(const lobq_diffusion *handle, double *out);

/* P(no queue depletes by t). */
lobq_status lobq_survival_probability(const lobq_diffusion *handle,
                                      double t,
                                      double series_tol,
                                      double *out);

/* P(bid depletes first), i.e. the price-decrease probability. */
lobq_status lobq_price_decrease_probability(const lobq_diffusion *handle,
                                            double quad_tol,
                                            double *out);

/* sigma_Y^2(t): fluctuation variance of the order position around its fluid
 * limit. mode: 0 = quadrature (reference), 1 = closed form. */
lobq_status lobq_sigma_y2(const lobq_diffusion *handle,
                          const lobq_fluid *fluid,
                          double t,
                          int mode,
                          double *out);

/* Poisson rate function Lambda_N(x) at intensity lambda. */
lobq_status lobq_poisson_rate(double lambda, double x, double *out);

/* Rate density Lambda(x[6]) of the Poisson-i.i.d. order flow. */
lobq_status lobq_flow_rate_density(const lobq_marks *marks,
                                   double lambda,
                                   const double *x /* [6] */,
                                   double *out);

/* Simulate one scaled path; out[0..4] = (tau_b, tau_a, tau_z, tau).
 * upsilon_power = 1.0 selects uniform cancellation. */
lobq_status lobq_simulate_stops(const lobq_arrival_spec *spec,
                                const lobq_marks *marks,
                                uint64_t n,
                                double qb0,
                                double qa0,
                                double z0,
                                double horizon,
                                double upsilon_power,
                                uint64_t seed,
                                double *out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* LOBQ_H */
