#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "saddlekit/covariance.hpp"
#include "saddlekit/potentials.hpp"
#include "saddlekit/types.hpp"

namespace saddlekit::neb {

enum class Variant { std_, pen, al, metric, diag, ua };

Variant variant_from_string(const std::string& s);
std::string variant_name(Variant v);

struct NebParams {
  int n_images = 21;
  double k_s = 2.0;
  double alpha = 0.045;
  double alpha_k0 = 0.0;  // > 0: Robbins-Monro decay alpha_k = alpha / (1 + k/k0)
  double trust_radius = 0.028;
  double lambda = 0.006;
  // transient log-det penalty schedule gamma_k = gamma0 (1 + k/k0)^{-p}
  double gamma0 = 0.0;
  double gamma_k0 = 180.0;
  double gamma_p = 1.25;
  // tangent smoothing schedule omega_k = omega0 (1 + k/k0)^{-p}
  double omega_tau0 = 0.0;
  double omega_tau_k0 = 1.0;
  double omega_tau_p = 1.0;
  int reparam_interval = 20;
  Variant variant = Variant::std_;
  int climb_start = -1;  // iteration at which climbing activates; < 0 disables
  double kappa_E = 0.0;
  // stopping tolerances (used only when stop_enabled)
  bool stop_enabled = false;
  double eps_force = 0.0;
  double eps_spring = 0.0;
  double eps_unc = 0.0;
  // active-learning trigger thresholds
  double eta_var = 0.0;
  double eta_rel = 0.0;
  double eta_bar = 0.0;
  double rho_s = 1.0;     // residual spring weight
  double epsilon = 1e-12; // denominator regularizer
  bool use_trust_ratio = false;
  // metric settings
  bool normalize_trace = true;
  double solve_tol = 1e-8;
  // label-refresh comparator (variant al)
  int al_refresh_interval = 25;
  int al_refresh_count = 2;

  cov::MetricParams metric_params() const {
    cov::MetricParams m;
    m.lambda = lambda;
    m.solve_tol = solve_tol;
    m.normalize_trace = normalize_trace;
    return m;
  }
  double alpha_at(int k) const {
    if (alpha_k0 <= 0.0) return alpha;
    return alpha / (1.0 + k / alpha_k0);
  }
  double gamma_at(int k) const {
    if (gamma0 == 0.0) return 0.0;
    return gamma0 * std::pow(1.0 + k / gamma_k0, -gamma_p);
  }
  double omega_tau_at(int k) const {
    if (omega_tau0 == 0.0) return 0.0;
    return omega_tau0 * std::pow(1.0 + k / omega_tau_k0, -omega_tau_p);
  }
  bool uses_metric() const {
    return variant == Variant::ua || variant == Variant::metric || variant == Variant::diag;
  }
  bool uses_metric_spring() const { return variant == Variant::ua || variant == Variant::diag; }
  bool uses_penalty() const { return variant == Variant::pen || variant == Variant::ua; }
};

/// Discretized band: fixed endpoints plus n interior images with cached
/// energies and tangent state.
struct Band {
  Vec left, right;
  std::vector<Vec> images;
  std::vector<double> energies;  // interior images
  double energy_left = 0.0;
  double energy_right = 0.0;
  bool energies_valid = false;
  bool endpoint_energies_valid = false;  // endpoints never move within a run
  std::vector<Vec> tau;        // unit tangents, interior
  std::vector<Vec> tau_state;  // smoothed tangent memory (empty entries until first use)
  std::optional<int> climbing;

  int n() const { return static_cast<int>(images.size()); }
  int dim() const { return static_cast<int>(left.size()); }
  const Vec& node(int i) const;  // i in [0, n+1], endpoints included

  static Band linear_interpolate(Vec a, Vec b, int n_interior);
};

void refresh_energies(Band& band, const pot::PotentialField& mean);

/// Henkelman-Jonsson energy-weighted tangent (raw, unnormalized direction).
Vec hj_tangent_raw(const Vec& xm, const Vec& x0, const Vec& xp, double em, double e0, double ep);

/// Raw tangent blended with the previous smoothed tangent and normalized;
/// updates band.tau_state[i] and band.tau[i].
Vec hj_tangent(Band& band, int i, double omega_tau);

struct ObliqueSplit {
  Vec perp, par;
};

/// Oblique projection along the metric tangent: par = G tau (tau'z)/(tau'G tau),
/// perp = z - par.  tau' perp = 0 exactly up to roundoff.
ObliqueSplit oblique_project(const cov::Metric& G, const Vec& tau, const Vec& z,
                             double epsilon = 1e-12);

struct NebForces {
  std::vector<Vec> force;            // assembled per-image optimizer force
  std::vector<Vec> sampled_force;    // raw oracle samples F_hat
  std::vector<cov::CovarianceOperator> sigma;
  std::vector<cov::Metric> metric;   // per-image metric (Euclidean for std/pen/al)
  std::vector<Vec> normal_vec;       // Q_perp G g_hat per image
  std::vector<double> normal_residual;
  std::vector<double> sigma_trace;
  std::vector<Vec> psi_grad;         // per-image grad Psi_lambda (empty when off)
  double gamma_k = 0.0;
  std::optional<int> climbing;
};

/// Samples one force per interior image (matched budget across variants) and
/// assembles the per-variant NEB forces, including the climbing image and the
/// transient penalty gradient when active.
NebForces ua_neb_forces(Band& band, const pot::StochasticForceOracle& oracle, const NebParams& p,
                        int iter, std::uint64_t stream_seed);

/// Applies s_i = alpha (F_i - gamma_k q_i) with a global trust-radius scaling,
/// keeps endpoints fixed, and reparametrizes to equal arc length every
/// reparam_interval iterations while climbing is inactive.
void neb_step(Band& band, const NebForces& forces, const NebParams& p, int iter);

/// Redistributes interior images to equal arc length along the piecewise
/// linear band; invalidates energy and tangent caches.
void reparametrize_equal_arclength(Band& band);

using MetricProvider = std::function<cov::Metric(int image, const Vec& x)>;

/// Deterministic residual: sum_i |Q_perp G grad(x_i)|^2 +
/// rho_s sum_i (|dx+|_G - |dx-|_G)^2, with the mean-potential gradient.
double neb_residual(const Band& band, const pot::PotentialField& mean, const NebParams& p,
                    const MetricProvider& metric_at);

struct StopDecision {
  bool stop = false;
  bool force_ok = false, spring_ok = false, unc_ok = false;
  double max_normal_force = 0.0, max_spring_mismatch = 0.0, max_unc_ratio = 0.0;
};

StopDecision check_stop_neb(const Band& band, const NebForces& forces, const NebParams& p);

struct TriggerRecord {
  bool var_fired = false, rel_fired = false, bar_fired = false;
  double max_lambda_max = 0.0, max_rel_ratio = 0.0, barrier_var = 0.0;
  std::vector<int> var_images, rel_images;
  bool any() const { return var_fired || rel_fired || bar_fired; }
};

TriggerRecord al_trigger_eval(const Band& band, const NebForces& forces, double barrier_var,
                              const NebParams& p);

struct NebRunOptions {
  int iterations = 500;
  std::uint64_t stream_seed = 0;
  bool record_barrier = true;
  bool record_residual = false;
};

struct NebRunResult {
  Band band;
  std::vector<double> barrier_by_iter;   // includes the initial band (index 0)
  std::vector<double> residual_by_iter;  // deterministic residual (optional)
  double final_barrier = 0.0;
  double final_residual = 0.0;           // deterministic residual at the final band
  double final_max_normal_gradient = 0.0;
  std::uint64_t oracle_calls = 0;
  bool stopped_early = false;
  int iterations_run = 0;
};

/// One full band optimization (Algorithm 1) for a single seed and variant.
NebRunResult run_neb(const pot::StochasticForceOracle& oracle, Band band, const NebParams& p,
                     const NebRunOptions& opt);

/// Metric provider matching the variant's geometry (Euclidean for std/pen/al).
MetricProvider variant_metric_provider(const pot::StochasticForceOracle& oracle,
                                       const NebParams& p);

/// max_i |(I - tau tau') grad E(x_i)| with the band's cached tangents.
double max_normal_mean_gradient(Band& band, const pot::PotentialField& mean);

}  // namespace saddlekit::neb
