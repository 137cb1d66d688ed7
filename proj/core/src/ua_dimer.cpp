#include "saddlekit/ua_dimer.hpp"

#include <cmath>
#include <stdexcept>

namespace saddlekit::dimer {

Mat householder_complement(const Vec& v) {
  const int d = static_cast<int>(v.size());
  Vec u = v.normalized();
  // Reflector mapping e1 -> sign * u; columns 2..d of H span u-perp.
  const double sign = (u[0] >= 0.0) ? 1.0 : -1.0;
  Vec w = u;
  w[0] += sign;
  const double wn2 = w.squaredNorm();
  Mat H = Mat::Identity(d, d);
  if (wn2 > 0.0) H -= (2.0 / wn2) * (w * w.transpose());
  return H.rightCols(d - 1);
}

HvpResult hvp_estimate(const pot::StochasticForceOracle& oracle, const Vec& x, const Vec& v,
                       double h, std::uint64_t stream_seed, std::uint64_t iter,
                       const Mat* cross_cov) {
  if (!(h > 0.0)) throw std::invalid_argument("hvp_estimate requires h > 0");
  const Vec xp = x + h * v;
  const Vec xm = x - h * v;
  auto plus = oracle.sample_force(xp, {stream_seed, iter, 1});
  auto minus = oracle.sample_force(xm, {stream_seed, iter, 2});
  HvpResult out;
  out.hv = -(plus.force - minus.force) / (2.0 * h);
  const double w = 1.0 / (4.0 * h * h);
  if (cross_cov != nullptr) {
    Mat S = plus.sigma.densify() + minus.sigma.densify() - *cross_cov - cross_cov->transpose();
    out.sigma = cov::CovarianceOperator::dense(w * S);
  } else if (plus.sigma.is_dense() || minus.sigma.is_dense()) {
    out.sigma = cov::CovarianceOperator::dense(w * (plus.sigma.densify() + minus.sigma.densify()));
  } else if (plus.sigma.is_diagonal_variant() && minus.sigma.is_diagonal_variant()) {
    out.sigma = cov::CovarianceOperator::diagonal(
        w * (plus.sigma.diagonal_entries() + minus.sigma.diagonal_entries()));
  } else if (plus.sigma.is_block_local() && minus.sigma.is_block_local()) {
    // Merge the two block lists; overlapping blocks are allowed.
    auto blocks = plus.sigma.as_block_local().blocks;
    const auto& mb = minus.sigma.as_block_local().blocks;
    blocks.insert(blocks.end(), mb.begin(), mb.end());
    for (auto& b : blocks) b.B *= w;
    out.sigma = cov::CovarianceOperator::block_local(plus.sigma.dim(), std::move(blocks));
  } else {
    out.sigma = cov::CovarianceOperator::dense(w * (plus.sigma.densify() + minus.sigma.densify()));
  }
  return out;
}

HvpResult hvp_estimate_members(const std::vector<std::pair<Vec, Vec>>& member_forces_pm, double h,
                               double s_H, double sigma_H_floor) {
  if (!(h > 0.0)) throw std::invalid_argument("hvp_estimate requires h > 0");
  const int m = static_cast<int>(member_forces_pm.size());
  if (m < 1) throw std::invalid_argument("hvp_estimate_members requires at least one member");
  const int d = static_cast<int>(member_forces_pm.front().first.size());
  std::vector<Vec> hv(m);
  Vec mean = Vec::Zero(d);
  for (int i = 0; i < m; ++i) {
    hv[i] = -(member_forces_pm[i].first - member_forces_pm[i].second) / (2.0 * h);
    mean += hv[i];
  }
  mean /= m;
  HvpResult out;
  out.hv = mean;
  Mat S = Mat::Zero(d, d);
  if (m >= 2) {
    for (int i = 0; i < m; ++i) {
      Vec r = hv[i] - mean;
      S.noalias() += r * r.transpose();
    }
    S *= s_H * s_H / (m - 1);
  }
  S.diagonal().array() += sigma_H_floor * sigma_H_floor;
  out.sigma = cov::CovarianceOperator::dense(std::move(S));
  return out;
}

namespace {

double hvp_noise_ratio(const Vec& v, const HvpResult& hvp, double eps) {
  // tr(P_v S P_v) = tr(S) - v' S v for a unit v.
  const double tr = hvp.sigma.trace() - v.dot(hvp.sigma.apply(v));
  const Vec pv_hv = hvp.hv - v * v.dot(hvp.hv);
  return std::max(0.0, tr) / (pv_hv.squaredNorm() + eps);
}

}  // namespace

std::pair<double, bool> adapt_dimer_length(const DimerState& state, const HvpResult& hvp,
                                           const DimerParams& p) {
  const double ratio = hvp_noise_ratio(state.v, hvp, p.epsilon);
  if (ratio <= p.eta_H) return {state.h, false};
  double h = state.h;
  double predicted = ratio;
  while (h < p.h_max) {
    const double h_next = std::min(2.0 * h, p.h_max);
    // Frozen endpoint covariance: Sigma_Hv scales as h^{-2}.
    predicted *= (h * h) / (h_next * h_next);
    h = h_next;
    if (predicted <= p.eta_H) return {h, false};
  }
  return {h, true};
}

Vec dimer_rotate(const DimerState& state, const HvpResult& hvp, const DimerParams& p,
                 bool fallback) {
  const Vec& v = state.v;
  const Vec r = hvp.hv - v * v.dot(hvp.hv);  // P_v Hv
  Vec delta;
  if (p.ua && !fallback) {
    const Mat W = householder_complement(v);
    const int k = static_cast<int>(W.cols());
    Mat A(k, k);
    for (int j = 0; j < k; ++j) {
      A.col(j) = W.transpose() * hvp.sigma.apply(W.col(j));
    }
    A = 0.5 * (A + A.transpose());
    A.diagonal().array() += p.lambda_H;
    Eigen::LLT<Mat> llt(A);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("dimer_rotate: tangent-space system not positive definite");
    delta = -p.beta * (W * llt.solve(W.transpose() * r));
  } else {
    delta = -p.beta * r;
  }
  const double dn = delta.norm();
  if (dn > 0.0) {
    const double angle = std::atan(dn);
    if (angle > p.theta_max) delta *= std::tan(p.theta_max) / dn;
  }
  Vec vn = v + delta;
  const double n = vn.norm();
  if (!(n > 0.0)) throw std::runtime_error("dimer_rotate: degenerate retraction");
  return vn / n;
}

Vec dimer_translate(const DimerState& state, const Vec& force_sample,
                    const cov::CovarianceOperator& sigma, const DimerParams& p) {
  const Vec ghat = -force_sample;
  const Vec& v = state.v;
  const Vec reflected = -ghat + 2.0 * v * v.dot(ghat);
  Vec step;
  if (p.ua) {
    cov::Metric G(sigma, p.metric_params());
    step = p.alpha * G.apply(reflected);
  } else {
    step = p.alpha * reflected;
  }
  const double sn = step.norm();
  if (sn > p.trust_radius && sn > 0.0) step *= p.trust_radius / sn;
  Vec xn = state.x + step;
  if (!xn.allFinite()) throw std::runtime_error("dimer_translate: non-finite step");
  return xn;
}

double dimer_residual(const Vec& x, const Vec& v, const pot::PotentialField& mean) {
  const double eps = 1e-5;
  const Vec hv = (mean.gradient(x + eps * v) - mean.gradient(x - eps * v)) / (2.0 * eps);
  const Vec rot = hv - v * v.dot(hv);
  const Vec g = mean.gradient(x);
  const Vec refl = -g + 2.0 * v * v.dot(g);
  return rot.squaredNorm() + refl.squaredNorm();
}

HandoffResult handoff(const neb::Band& band, int climb_index,
                      const pot::StochasticForceOracle& oracle, const DimerParams& p,
                      double neb_trust_radius, std::uint64_t stream_seed, std::uint64_t iter,
                      int trace_probes) {
  HandoffResult out;
  const Vec& xc = band.images.at(climb_index);
  Vec tau = band.tau.at(climb_index);
  auto sample = oracle.sample_force(xc, {stream_seed, iter, static_cast<std::uint64_t>(climb_index + 1)});
  const Vec ghat = -sample.force;
  cov::Metric G(sample.sigma, p.metric_params());
  const neb::ObliqueSplit split = neb::oblique_project(G, tau, G.apply(ghat), p.epsilon);

  // Trace of Q_perp G Sigma G Q_perp', exactly (densified) or by probing.
  const Vec gtau = G.apply(tau);
  const double tgt = tau.dot(gtau);
  auto qperp_t = [&](const Vec& z) { return z - tau * (gtau.dot(z) / tgt); };  // Q_perp' z
  double trace = 0.0;
  const int d = static_cast<int>(xc.size());
  if (trace_probes <= 0) {
    Mat M(d, d);
    for (int j = 0; j < d; ++j) {
      Vec e = Vec::Zero(d);
      e[j] = 1.0;
      M.col(j) = qperp_t(e);
    }
    // columns of M are Q_perp' e_j; accumulate e_j' Q GSG Q' e_j.
    for (int j = 0; j < d; ++j) {
      const Vec w = G.apply(M.col(j));
      trace += w.dot(sample.sigma.apply(w));
    }
  } else {
    rng::CounterStream stream(0x48414e44ULL, static_cast<std::uint64_t>(d), trace_probes, 0);
    for (int q = 0; q < trace_probes; ++q) {
      Vec z(d);
      for (int i = 0; i < d; ++i) z[i] = stream.next_sign();
      const Vec w = G.apply(qperp_t(z));
      trace += w.dot(sample.sigma.apply(w));
    }
    trace /= trace_probes;
  }
  out.snr = split.perp.norm() / (std::sqrt(std::max(0.0, trace)) + p.epsilon);
  out.accept = out.snr <= p.eta_hand;
  const Vec& prev = (climb_index == 0) ? band.left : band.images[climb_index - 1];
  out.trust0 = std::min(neb_trust_radius, 2.0 * (xc - prev).norm());
  out.state.x = xc;
  out.state.v = tau.normalized();
  out.state.h = 0.0;  // caller sets the dimer length
  return out;
}

DimerRunResult run_dimer(const pot::StochasticForceOracle& oracle, DimerState state,
                         const DimerParams& p, const DimerRunOptions& opt) {
  DimerRunResult res;
  oracle.reset_calls();
  for (int k = 0; k < opt.iterations; ++k) {
    HvpResult hvp = hvp_estimate(oracle, state.x, state.v, state.h, opt.stream_seed,
                                 static_cast<std::uint64_t>(k));
    bool fallback = false;
    if (p.eta_H > 0.0) {
      auto [h_new, fb] = adapt_dimer_length(state, hvp, p);
      state.h = h_new;
      fallback = fb;
    }
    state.v = dimer_rotate(state, hvp, p, fallback);
    auto center = oracle.sample_force(state.x, {opt.stream_seed, static_cast<std::uint64_t>(k), 0});
    state.x = dimer_translate(state, center.force, center.sigma, p);
    state.iter = k + 1;
    if (opt.record_residual) {
      res.residual_by_iter.push_back(oracle.mean_gradient(state.x).norm());
    }
  }
  // Reflected-gradient residual |-g + 2vv'g| = |g| at the final center.
  res.final_reflected_residual = oracle.mean_gradient(state.x).norm();
  res.final_residual = dimer_residual(state.x, state.v, oracle.mean());
  res.oracle_calls = oracle.calls();
  res.state = std::move(state);
  return res;
}

}  // namespace saddlekit::dimer
