#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "saddlekit/covariance.hpp"
#include "saddlekit/potentials.hpp"
#include "saddlekit/types.hpp"
#include "saddlekit/ua_neb.hpp"

namespace saddlekit::dimer {

struct DimerParams {
  double alpha = 0.035;        // translation step
  double beta = 0.018;         // rotation step
  double lambda = 0.018;       // force-metric regularization
  double lambda_H = 0.030;     // rotation-metric regularization
  double trust_radius = 0.035;
  double theta_max = 0.18;     // trust angle, radians
  double eta_H = 0.0;          // HVP-noise ratio bound; adaptive h only when > 0
  double h_min = 1e-4;
  double h_max = 1.0;
  double eta_hand = 0.5;       // handoff signal-to-noise threshold
  double epsilon = 1e-12;
  bool ua = true;              // false: Euclidean rotation and translation
  bool normalize_trace = true;
  double solve_tol = 1e-8;

  cov::MetricParams metric_params() const {
    cov::MetricParams m;
    m.lambda = lambda;
    m.lambda_H = lambda_H;
    m.solve_tol = solve_tol;
    m.normalize_trace = normalize_trace;
    return m;
  }
};

struct DimerState {
  Vec x;
  Vec v;            // unit direction
  double h = 0.055; // dimer length
  int iter = 0;
};

struct HvpResult {
  Vec hv;
  cov::CovarianceOperator sigma;  // covariance of the HVP estimate
};

/// Centered force-difference Hessian-vector product from one paired oracle
/// call per endpoint, with covariance (Sigma+ + Sigma-)/(4h^2).  A known
/// paired cross-covariance can be supplied and is subtracted.
HvpResult hvp_estimate(const pot::StochasticForceOracle& oracle, const Vec& x, const Vec& v,
                       double h, std::uint64_t stream_seed, std::uint64_t iter,
                       const Mat* cross_cov = nullptr);

/// Ensemble-member route: per-member centered differences at x +- hv, sample
/// mean and covariance, scaled by s_H^2 with a variance floor.
HvpResult hvp_estimate_members(const std::vector<std::pair<Vec, Vec>>& member_forces_pm, double h,
                               double s_H = 1.0, double sigma_H_floor = 0.0);

/// tr(P_v Sigma_Hv P_v) / (|P_v Hv|^2 + eps); if it exceeds eta_H, doubles h
/// up to h_max using the h^{-2} scaling law of the HVP covariance at frozen
/// endpoint covariance.  Returns (new h, fallback) where fallback requests the
/// Euclidean rotation weight.
std::pair<double, bool> adapt_dimer_length(const DimerState& state, const HvpResult& hvp,
                                           const DimerParams& p);

/// Covariance-weighted retracted rotation step; with `fallback` (or a
/// non-UA variant) the tangent weight is the Euclidean projector.
Vec dimer_rotate(const DimerState& state, const HvpResult& hvp, const DimerParams& p,
                 bool fallback = false);

/// Metric reflected-gradient translation using the already-updated direction.
Vec dimer_translate(const DimerState& state, const Vec& force_sample,
                    const cov::CovarianceOperator& sigma, const DimerParams& p);

/// |(I - vv') H v|^2 + |reflected gradient|^2 on the mean potential, with the
/// Hessian-vector product by central differences (step 1e-5).  Diagnostic.
double dimer_residual(const Vec& x, const Vec& v, const pot::PotentialField& mean);

struct HandoffResult {
  bool accept = false;
  DimerState state;
  double snr = 0.0;
  double trust0 = 0.0;
};

/// Signal-to-noise acceptance of a NEB climbing image as a Dimer seed.
/// `trace_probes` = 0 densifies the covariance for an exact trace; otherwise
/// Rademacher probing with that many probes.
HandoffResult handoff(const neb::Band& band, int climb_index,
                      const pot::StochasticForceOracle& oracle, const DimerParams& p,
                      double neb_trust_radius, std::uint64_t stream_seed,
                      std::uint64_t iter, int trace_probes = 0);

struct DimerRunOptions {
  int iterations = 260;
  std::uint64_t stream_seed = 0;
  bool record_residual = false;  // deterministic reflected-gradient norm per iteration
};

struct DimerRunResult {
  DimerState state;
  double final_reflected_residual = 0.0;  // |grad E| at the final center
  double final_residual = 0.0;            // full dimer residual (diagnostic)
  std::vector<double> residual_by_iter;
  std::uint64_t oracle_calls = 0;
};

/// One Dimer run (Algorithm 2): rotate with the paired HVP, then translate
/// with a fresh center sample; three oracle calls per iteration.
DimerRunResult run_dimer(const pot::StochasticForceOracle& oracle, DimerState state,
                         const DimerParams& p, const DimerRunOptions& opt);

/// Orthonormal basis of the tangent space v-perp via a Householder reflector.
Mat householder_complement(const Vec& v);

}  // namespace saddlekit::dimer
