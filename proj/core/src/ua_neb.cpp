#include "saddlekit/ua_neb.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace saddlekit::neb {

Variant variant_from_string(const std::string& s) {
  if (s == "std") return Variant::std_;
  if (s == "pen") return Variant::pen;
  if (s == "al") return Variant::al;
  if (s == "metric") return Variant::metric;
  if (s == "diag") return Variant::diag;
  if (s == "ua") return Variant::ua;
  throw std::invalid_argument("unknown NEB variant: " + s);
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::std_: return "std";
    case Variant::pen: return "pen";
    case Variant::al: return "al";
    case Variant::metric: return "metric";
    case Variant::diag: return "diag";
    case Variant::ua: return "ua";
  }
  return "?";
}

const Vec& Band::node(int i) const {
  if (i == 0) return left;
  if (i == n() + 1) return right;
  return images[i - 1];
}

Band Band::linear_interpolate(Vec a, Vec b, int n_interior) {
  if (n_interior < 1) throw std::invalid_argument("band needs at least one interior image");
  Band band;
  band.left = std::move(a);
  band.right = std::move(b);
  band.images.reserve(n_interior);
  for (int i = 1; i <= n_interior; ++i) {
    const double t = static_cast<double>(i) / (n_interior + 1);
    band.images.push_back((1.0 - t) * band.left + t * band.right);
  }
  band.energies.assign(n_interior, 0.0);
  band.tau.assign(n_interior, Vec());
  band.tau_state.assign(n_interior, Vec());
  return band;
}

void refresh_energies(Band& band, const pot::PotentialField& mean) {
  if (band.energies_valid) return;
  if (!band.endpoint_energies_valid) {
    band.energy_left = mean.energy(band.left);
    band.energy_right = mean.energy(band.right);
    band.endpoint_energies_valid = true;
  }
  band.energies.resize(band.n());
  for (int i = 0; i < band.n(); ++i) band.energies[i] = mean.energy(band.images[i]);
  band.energies_valid = true;
}

Vec hj_tangent_raw(const Vec& xm, const Vec& x0, const Vec& xp, double em, double e0, double ep) {
  const Vec tplus = xp - x0;
  const Vec tminus = x0 - xm;
  if (ep > e0 && e0 > em) return tplus;
  if (ep < e0 && e0 < em) return tminus;
  const double dmax = std::max(std::abs(ep - e0), std::abs(em - e0));
  const double dmin = std::min(std::abs(ep - e0), std::abs(em - e0));
  if (ep > em) return dmax * tplus + dmin * tminus;
  return dmin * tplus + dmax * tminus;
}

Vec hj_tangent(Band& band, int i, double omega_tau) {
  if (!band.energies_valid) throw std::logic_error("hj_tangent: energies not cached");
  const int idx = i - 1;
  const double em = (i == 1) ? band.energy_left : band.energies[idx - 1];
  const double ep = (i == band.n()) ? band.energy_right : band.energies[idx + 1];
  Vec raw = hj_tangent_raw(band.node(i - 1), band.node(i), band.node(i + 1), em,
                           band.energies[idx], ep);
  const double raw_norm = raw.norm();
  if (raw_norm <= 0.0) throw std::runtime_error("hj_tangent: degenerate image spacing");
  raw /= raw_norm;
  Vec out = raw;
  if (omega_tau > 0.0 && band.tau_state[idx].size() == raw.size()) {
    Vec blended = (1.0 - omega_tau) * raw + omega_tau * band.tau_state[idx];
    const double bn = blended.norm();
    // Antipodal raw/previous tangents give a zero blend; fall back to raw.
    if (bn > 1e-12) out = blended / bn;
  }
  band.tau_state[idx] = out;
  band.tau[idx] = out;
  return out;
}

ObliqueSplit oblique_project(const cov::Metric& G, const Vec& tau, const Vec& z, double epsilon) {
  const Vec gtau = G.apply(tau);
  const double tgt = tau.dot(gtau);
  if (!(tgt > epsilon)) throw std::invalid_argument("oblique_project: degenerate metric-tangent pairing");
  ObliqueSplit s;
  s.par = gtau * (tau.dot(z) / tgt);
  s.perp = z - s.par;
  return s;
}

namespace {

Vec euclidean_normal(const Vec& tau, const Vec& z) { return z - tau * tau.dot(z); }

int argmax_energy(const std::vector<double>& e) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(e.size()); ++i) {
    if (e[i] > e[best]) best = i;  // strict: smallest index wins ties
  }
  return best;
}

}  // namespace

NebForces ua_neb_forces(Band& band, const pot::StochasticForceOracle& oracle, const NebParams& p,
                        int iter, std::uint64_t stream_seed) {
  const int n = band.n();
  refresh_energies(band, oracle.mean());
  const double omega = p.omega_tau_at(iter);
  for (int i = 1; i <= n; ++i) hj_tangent(band, i, omega);

  // Climbing image: the highest-mean-energy image is converted once the
  // activation iteration is reached and keeps the role thereafter; a churning
  // identity would leave several images alternately unsprung.
  if (p.climb_start >= 0 && iter >= p.climb_start) {
    if (!band.climbing) band.climbing = argmax_energy(band.energies);
  } else {
    band.climbing.reset();
  }

  NebForces out;
  out.climbing = band.climbing;
  out.force.resize(n);
  out.sampled_force.resize(n);
  out.sigma.resize(n);
  out.metric.resize(n);
  out.normal_vec.resize(n);
  out.normal_residual.resize(n);
  out.sigma_trace.resize(n);
  out.gamma_k = p.uses_penalty() ? p.gamma_at(iter) : 0.0;

  // One oracle call per interior image per iteration, in every variant.
  for (int i = 0; i < n; ++i) {
    pot::StreamKey key{stream_seed, static_cast<std::uint64_t>(iter),
                       static_cast<std::uint64_t>(i + 1)};
    auto sample = oracle.sample_force(band.images[i], key);
    out.sampled_force[i] = std::move(sample.force);
    out.sigma[i] = std::move(sample.sigma);
    out.sigma_trace[i] = out.sigma[i].trace();
  }

  // Label-refresh comparator: replace the two highest-uncertainty samples by
  // the exact mean force for this iteration only.
  if (p.variant == Variant::al && p.al_refresh_interval > 0 && iter > 0 &&
      iter % p.al_refresh_interval == 0) {
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return out.sigma_trace[a] > out.sigma_trace[b]; });
    for (int r = 0; r < std::min(p.al_refresh_count, n); ++r) {
      const int i = order[r];
      out.sampled_force[i] = -oracle.mean_gradient(band.images[i]);
    }
  }

  const cov::MetricParams mp = p.metric_params();
  for (int i = 0; i < n; ++i) {
    if (p.uses_metric()) {
      const auto& sig = (p.variant == Variant::diag) ? out.sigma[i].diagonal_part() : out.sigma[i];
      out.metric[i] = cov::Metric(sig, mp);
    } else {
      out.metric[i] = cov::Metric();
    }
    const Vec ghat = -out.sampled_force[i];
    const Vec& tau = band.tau[i];
    const Vec gg = out.metric[i].apply(ghat);
    ObliqueSplit split = oblique_project(out.metric[i], tau, gg, p.epsilon);
    out.normal_vec[i] = split.perp;
    out.normal_residual[i] = split.perp.norm();

    if (band.climbing && *band.climbing == i) {
      // Climbing force: reflected preconditioned gradient, no spring.
      out.force[i] = -gg + 2.0 * split.par;
      continue;
    }
    Vec normal_force = -split.perp;
    const Vec dplus = band.node(i + 2) - band.node(i + 1);
    const Vec dminus = band.node(i + 1) - band.node(i);
    Vec spring;
    if (p.uses_metric_spring()) {
      const double lp = out.metric[i].norm(dplus);
      const double lm = out.metric[i].norm(dminus);
      const double tgt = out.metric[i].quadratic(tau);
      spring = p.k_s * (lp - lm) * tau / std::sqrt(std::max(tgt, p.epsilon));
    } else {
      spring = p.k_s * (dplus.norm() - dminus.norm()) * tau;
    }
    out.force[i] = normal_force + spring;
  }

  if (p.uses_penalty() && out.gamma_k > 0.0) {
    out.psi_grad.resize(n);
    const auto& field = oracle.covariance_field();
    const double nm2 = oracle.noise_multiplier() * oracle.noise_multiplier();
    const int d = band.dim();
    for (int i = 0; i < n; ++i) {
      Vec q(d);
      for (int j = 0; j < d; ++j) {
        Vec u = Vec::Zero(d);
        u[j] = 1.0;
        // Gradient of log det(nm^2 Sigma(x) + lambda I) by coordinate
        // central differences.
        const Vec& x = band.images[i];
        const double eps = 1e-5 * std::max(1.0, x.norm());
        const double plus = cov::logdet(field.sigma_at(x + eps * u).scaled(nm2), p.lambda);
        const double minus = cov::logdet(field.sigma_at(x - eps * u).scaled(nm2), p.lambda);
        q[j] = (plus - minus) / (2.0 * eps);
      }
      out.psi_grad[i] = std::move(q);
    }
  }
  return out;
}

void reparametrize_equal_arclength(Band& band) {
  const int n = band.n();
  std::vector<double> cum(n + 2, 0.0);
  for (int i = 1; i <= n + 1; ++i) cum[i] = cum[i - 1] + (band.node(i) - band.node(i - 1)).norm();
  const double total = cum[n + 1];
  std::vector<Vec> fresh(n);
  int seg = 1;
  for (int j = 1; j <= n; ++j) {
    const double target = total * j / (n + 1);
    while (seg < n + 1 && cum[seg] < target) ++seg;
    const double span = cum[seg] - cum[seg - 1];
    const double t = (span > 0.0) ? (target - cum[seg - 1]) / span : 0.0;
    fresh[j - 1] = (1.0 - t) * band.node(seg - 1) + t * band.node(seg);
  }
  band.images = std::move(fresh);
  band.energies_valid = false;
  for (auto& s : band.tau_state) s = Vec();
}

void neb_step(Band& band, const NebForces& forces, const NebParams& p, int iter) {
  const int n = band.n();
  const double alpha_k = p.alpha_at(iter);
  std::vector<Vec> steps(n);
  double max_norm = 0.0;
  for (int i = 0; i < n; ++i) {
    Vec s = alpha_k * forces.force[i];
    if (!forces.psi_grad.empty() && forces.gamma_k > 0.0) {
      s -= alpha_k * forces.gamma_k * forces.psi_grad[i];
    }
    if (!s.allFinite()) throw std::runtime_error("neb_step: non-finite step component");
    max_norm = std::max(max_norm, s.norm());
    steps[i] = std::move(s);
  }
  const double scale = (max_norm > p.trust_radius && max_norm > 0.0)
                           ? p.trust_radius / max_norm
                           : 1.0;
  for (int i = 0; i < n; ++i) band.images[i] += scale * steps[i];
  band.energies_valid = false;

  const bool climb_active = p.climb_start >= 0 && iter >= p.climb_start;
  if (!climb_active && p.reparam_interval > 0 && (iter + 1) % p.reparam_interval == 0) {
    reparametrize_equal_arclength(band);
  }
}

double neb_residual(const Band& band, const pot::PotentialField& mean, const NebParams& p,
                    const MetricProvider& metric_at) {
  Band work = band;
  refresh_energies(work, mean);
  double acc = 0.0;
  for (int i = 1; i <= work.n(); ++i) {
    Vec tau;
    if (band.tau.size() == static_cast<size_t>(band.n()) && band.tau[i - 1].size() == band.dim()) {
      tau = band.tau[i - 1];
    } else {
      tau = hj_tangent(work, i, 0.0);
    }
    const cov::Metric G = metric_at ? metric_at(i - 1, work.images[i - 1]) : cov::Metric();
    const Vec g = mean.gradient(work.images[i - 1]);
    const ObliqueSplit split = oblique_project(G, tau, G.apply(g), p.epsilon);
    acc += split.perp.squaredNorm();
    const double lp = G.norm(work.node(i + 1) - work.node(i));
    const double lm = G.norm(work.node(i) - work.node(i - 1));
    acc += p.rho_s * (lp - lm) * (lp - lm);
  }
  return acc;
}

StopDecision check_stop_neb(const Band& band, const NebForces& forces, const NebParams& p) {
  StopDecision d;
  const int n = band.n();
  for (int i = 0; i < n; ++i) {
    d.max_normal_force = std::max(d.max_normal_force, forces.normal_residual[i]);
    const double lp = forces.metric[i].norm(band.node(i + 2) - band.node(i + 1));
    const double lm = forces.metric[i].norm(band.node(i + 1) - band.node(i));
    d.max_spring_mismatch = std::max(d.max_spring_mismatch, std::abs(lp - lm));
    const Vec& r = forces.normal_vec[i];
    const double var = std::max(0.0, r.dot(forces.sigma[i].apply(r)));
    d.max_unc_ratio = std::max(d.max_unc_ratio, std::sqrt(var) / (r.norm() + p.epsilon));
  }
  d.force_ok = d.max_normal_force <= p.eps_force;
  d.spring_ok = d.max_spring_mismatch <= p.eps_spring;
  d.unc_ok = d.max_unc_ratio <= p.eps_unc;
  d.stop = d.force_ok && d.spring_ok && d.unc_ok;
  return d;
}

TriggerRecord al_trigger_eval(const Band& band, const NebForces& forces, double barrier_var,
                              const NebParams& p) {
  TriggerRecord rec;
  rec.barrier_var = barrier_var;
  const int n = band.n();
  for (int i = 0; i < n; ++i) {
    const double lmax = cov::power_iteration_lambda_max(forces.sigma[i]);
    rec.max_lambda_max = std::max(rec.max_lambda_max, lmax);
    if (lmax > p.eta_var) {
      rec.var_fired = true;
      rec.var_images.push_back(i);
    }
    const Vec& f = forces.force[i];
    const double fn = f.norm();
    const Vec dir = f / (fn + p.epsilon);
    const double ratio = std::sqrt(std::max(0.0, dir.dot(forces.sigma[i].apply(dir)))) /
                         (fn + p.epsilon);
    rec.max_rel_ratio = std::max(rec.max_rel_ratio, ratio);
    if (ratio > p.eta_rel) {
      rec.rel_fired = true;
      rec.rel_images.push_back(i);
    }
  }
  rec.bar_fired = barrier_var > p.eta_bar * p.eta_bar;
  return rec;
}

MetricProvider variant_metric_provider(const pot::StochasticForceOracle& oracle,
                                       const NebParams& p) {
  if (!p.uses_metric()) return MetricProvider();
  const cov::MetricParams mp = p.metric_params();
  const bool diag = p.variant == Variant::diag;
  const auto* oracle_ptr = &oracle;
  return [oracle_ptr, mp, diag](int, const Vec& x) {
    cov::CovarianceOperator sig = oracle_ptr->covariance_at(x);
    if (diag) sig = sig.diagonal_part();
    return cov::Metric(std::move(sig), mp);
  };
}

double max_normal_mean_gradient(Band& band, const pot::PotentialField& mean) {
  refresh_energies(band, mean);
  double worst = 0.0;
  for (int i = 1; i <= band.n(); ++i) {
    const Vec tau = hj_tangent(band, i, 0.0);
    const Vec g = mean.gradient(band.images[i - 1]);
    worst = std::max(worst, euclidean_normal(tau, g).norm());
  }
  return worst;
}

namespace {

double band_barrier(Band& band, const pot::PotentialField& mean) {
  refresh_energies(band, mean);
  double top = band.energies.empty() ? band.energy_left
                                     : *std::max_element(band.energies.begin(), band.energies.end());
  return top - band.energy_left;
}

double merit_phi(const Band& band, const pot::StochasticForceOracle& oracle, const NebParams& p,
                 const MetricProvider& metric_at, double mu_psi) {
  double phi = 0.5 * neb_residual(band, oracle.mean(), p, metric_at);
  if (mu_psi > 0.0) {
    const double nm2 = oracle.noise_multiplier() * oracle.noise_multiplier();
    for (const auto& x : band.images) {
      phi += mu_psi * cov::logdet(oracle.covariance_field().sigma_at(x).scaled(nm2), p.lambda);
    }
  }
  return phi;
}

}  // namespace

NebRunResult run_neb(const pot::StochasticForceOracle& oracle, Band band, const NebParams& p,
                     const NebRunOptions& opt) {
  NebRunResult res;
  oracle.reset_calls();
  // The recorded residual is one fixed measuring stick across variants: the
  // metric-weighted residual with G built from the full prescribed covariance.
  NebParams canonical = p;
  canonical.variant = Variant::ua;
  MetricProvider residual_metric = variant_metric_provider(oracle, canonical);
  refresh_energies(band, oracle.mean());
  if (opt.record_barrier) res.barrier_by_iter.push_back(band_barrier(band, oracle.mean()));
  if (opt.record_residual)
    res.residual_by_iter.push_back(neb_residual(band, oracle.mean(), p, residual_metric));

  NebParams params = p;
  double trust = p.trust_radius;
  for (int k = 0; k < opt.iterations; ++k) {
    params.trust_radius = trust;
    NebForces forces = ua_neb_forces(band, oracle, params, k, opt.stream_seed);

    if (!p.use_trust_ratio) {
      neb_step(band, forces, params, k);
    } else {
      // Optional trust-ratio acceptance on the deterministic merit function.
      const double mu_psi = forces.gamma_k;
      Band trial = band;
      neb_step(trial, forces, params, k);
      const double phi0 = merit_phi(band, oracle, params, residual_metric, mu_psi);
      const double phi1 = merit_phi(trial, oracle, params, residual_metric, mu_psi);
      // Directional derivative of the merit along the applied step, by a
      // short forward difference.
      Band probe = band;
      const double delta = 1e-4;
      for (int i = 0; i < band.n(); ++i) {
        probe.images[i] += delta * (trial.images[i] - band.images[i]);
      }
      probe.energies_valid = false;
      const double dphi = (merit_phi(probe, oracle, params, residual_metric, mu_psi) - phi0) / delta;
      const double predicted = -dphi;
      const double rho = (phi0 - phi1) / (predicted + params.epsilon);
      if (predicted <= 0.0 || rho <= 0.1) {
        trust = std::max(0.5 * trust, 1e-8);
      } else {
        if (rho > 0.75) trust = std::min(1.5 * trust, 100.0 * p.trust_radius);
        band = std::move(trial);
      }
    }

    refresh_energies(band, oracle.mean());
    if (opt.record_barrier) res.barrier_by_iter.push_back(band_barrier(band, oracle.mean()));
    if (opt.record_residual)
      res.residual_by_iter.push_back(neb_residual(band, oracle.mean(), p, residual_metric));
    res.iterations_run = k + 1;

    if (p.stop_enabled) {
      const StopDecision dec = check_stop_neb(band, forces, params);
      if (dec.stop) {
        res.stopped_early = true;
        break;
      }
    }
  }
  res.final_barrier = band_barrier(band, oracle.mean());
  res.final_residual = neb_residual(band, oracle.mean(), p, residual_metric);
  res.final_max_normal_gradient = max_normal_mean_gradient(band, oracle.mean());
  res.oracle_calls = oracle.calls();
  res.band = std::move(band);
  return res;
}

}  // namespace saddlekit::neb
