#include "saddlekit/potentials.hpp"

#include <cmath>
#include <stdexcept>

namespace saddlekit::pot {

Vec fd_gradient(const PotentialField& pot, const Vec& x, double step) {
  Vec g(x.size());
  Vec xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    xp[i] = xi + step;
    const double ep = pot.energy(xp);
    xp[i] = xi - step;
    const double em = pot.energy(xp);
    xp[i] = xi;
    g[i] = (ep - em) / (2.0 * step);
  }
  return g;
}

double AnalyticDoubleWell::energy(const Vec& x) const {
  const double u = x[0] * x[0] - 1.0;
  const double w = x[1] - a_ * (1.0 - x[0] * x[0]);
  return u * u + k_ * w * w;
}

Vec AnalyticDoubleWell::gradient(const Vec& x) const {
  const double u = x[0] * x[0] - 1.0;
  const double w = x[1] - a_ * (1.0 - x[0] * x[0]);
  Vec g(2);
  g[0] = 4.0 * x[0] * u + 4.0 * k_ * a_ * x[0] * w;
  g[1] = 2.0 * k_ * w;
  return g;
}

Mat AnalyticDoubleWell::hessian(const Vec& x) const {
  const double w = x[1] - a_ * (1.0 - x[0] * x[0]);
  Mat H(2, 2);
  H(0, 0) = 12.0 * x[0] * x[0] - 4.0 + 4.0 * k_ * a_ * (w + 2.0 * a_ * x[0] * x[0]);
  H(0, 1) = 4.0 * k_ * a_ * x[0];
  H(1, 0) = H(0, 1);
  H(1, 1) = 2.0 * k_;
  return H;
}

std::pair<double, Vec> analytic_energy_grad(const Vec& x, double a, double k) {
  AnalyticDoubleWell pot(a, k);
  return {pot.energy(x), pot.gradient(x)};
}

std::pair<std::vector<Vec>, double> analytic_mep_reference(double a, int n_points) {
  if (n_points < 3) throw std::invalid_argument("analytic_mep_reference requires n_points >= 3");
  std::vector<Vec> path;
  path.reserve(n_points);
  for (int i = 0; i < n_points; ++i) {
    const double x1 = -1.0 + 2.0 * i / (n_points - 1);
    Vec p(2);
    p[0] = x1;
    p[1] = a * (1.0 - x1 * x1);
    path.push_back(std::move(p));
  }
  return {std::move(path), 1.0};
}

// ---------------------------------------------------------------------------
// Covariance fields

cov::CovarianceOperator TubeField2D::sigma_at(const Vec& x) const {
  // Local MEP frame at the same x1 coordinate: the exact path is
  // x2 = a (1 - x1^2), so the tangent direction is (1, -2 a x1).
  const double x1 = x[0];
  Eigen::Vector2d t(1.0, -2.0 * prm_.a * x1);
  t.normalize();
  const Eigen::Vector2d n(-t[1], t[0]);
  const double c = std::cos(prm_.rotation_theta);
  const double s = std::sin(prm_.rotation_theta);
  const Eigen::Vector2d et = c * t + s * n;
  const Eigen::Vector2d en = -s * t + c * n;

  const double env = std::exp(-x1 * x1 / (2.0 * prm_.envelope_width * prm_.envelope_width));
  const double lt = prm_.sigma_t_amp * prm_.sigma_t_amp + prm_.floor_t * prm_.floor_t;
  const double ln = prm_.sigma_n_amp * prm_.sigma_n_amp + prm_.floor_n * prm_.floor_n;
  Mat S = env * env * (lt * et * et.transpose() + ln * en * en.transpose());
  S.diagonal().array() += prm_.iso_floor * prm_.iso_floor;
  return cov::CovarianceOperator::dense(std::move(S));
}

CoreField3D::CoreField3D(const Params& prm) : prm_(prm) {
  cell_inv_ = prm_.cell.inverse();
  axis_unit_ = prm_.hop_axis.normalized();
}

cov::CovarianceOperator CoreField3D::sigma_at(const Vec& x) const {
  if (x.size() % 3 != 0) throw std::invalid_argument("CoreField3D: dimension not a multiple of 3");
  const int n = static_cast<int>(x.size()) / 3;
  const Mat3 par = axis_unit_ * axis_unit_.transpose();
  const Mat3 trans = Mat3::Identity() - par;
  const double w = prm_.midpoint_width * prm_.hop_length;
  std::vector<cov::CovBlock> blocks;
  blocks.reserve(n);
  for (int a = 0; a < n; ++a) {
    Vec3 r(x[3 * a], x[3 * a + 1], x[3 * a + 2]);
    Vec3 d = r - prm_.midpoint;
    if (prm_.periodic) {
      Vec3 f = cell_inv_ * d;
      for (int k = 0; k < 3; ++k) f[k] -= std::round(f[k]);
      d = prm_.cell * f;
    }
    const double env = std::exp(-d.squaredNorm() / (2.0 * prm_.core_radius * prm_.core_radius));
    const double s_along = std::abs(axis_unit_.dot(d));
    const double gate = 1.0 / (1.0 + std::exp((s_along - 0.5 * prm_.hop_length) / w));
    const double amp2 = env * env * gate * gate;
    Mat B = amp2 * (prm_.parallel_amp * prm_.parallel_amp * par +
                    prm_.transverse_amp * prm_.transverse_amp * trans);
    B.diagonal().array() += prm_.floor * prm_.floor;
    blocks.push_back({{3 * a, 3 * a + 1, 3 * a + 2}, std::move(B)});
  }
  return cov::CovarianceOperator::block_local(static_cast<int>(x.size()), std::move(blocks));
}

// ---------------------------------------------------------------------------
// Supercell

Vec Supercell::flatten() const {
  Vec x(3 * natoms());
  for (int a = 0; a < natoms(); ++a) {
    x.segment<3>(3 * a) = positions[a];
  }
  return x;
}

void Supercell::set_from_flat(const Vec& x) {
  if (x.size() != 3 * natoms()) throw std::invalid_argument("set_from_flat: size mismatch");
  for (int a = 0; a < natoms(); ++a) positions[a] = x.segment<3>(3 * a);
}

Vec3 Supercell::min_image(const Vec3& d) const {
  Vec3 f = cell.inverse() * d;
  for (int k = 0; k < 3; ++k) {
    if (periodic[k]) f[k] -= std::round(f[k]);
  }
  return cell * f;
}

VacancyCell build_vacancy_supercell(int n_cells, double a0, const std::string& species) {
  if (n_cells < 2) throw std::invalid_argument("build_vacancy_supercell requires n_cells >= 2");
  if (!(a0 > 0.0)) throw std::invalid_argument("build_vacancy_supercell requires a0 > 0");
  (void)species;
  Supercell cell;
  cell.cell = a0 * n_cells * Mat3::Identity();
  const int half = n_cells / 2;
  // Vacancy at the corner site of the central cell; the migrating atom is the
  // body-center neighbor one half-diagonal away.
  const Vec3 vac_site = a0 * Vec3(half, half, half);
  const Vec3 mig_site = a0 * Vec3(half - 0.5, half - 0.5, half - 0.5);
  int lattice_index = 0;
  int migrating = -1;
  for (int i = 0; i < n_cells; ++i) {
    for (int j = 0; j < n_cells; ++j) {
      for (int k = 0; k < n_cells; ++k) {
        for (int b = 0; b < 2; ++b) {
          const Vec3 p = a0 * Vec3(i + 0.5 * b, j + 0.5 * b, k + 0.5 * b);
          if ((p - vac_site).norm() < 1e-9 * a0) {
            cell.vacancy_lattice_index = lattice_index;
            ++lattice_index;
            continue;
          }
          if ((p - mig_site).norm() < 1e-9 * a0) migrating = static_cast<int>(cell.positions.size());
          cell.positions.push_back(p);
          cell.species.push_back(0);
          ++lattice_index;
        }
      }
    }
  }
  cell.frozen.assign(cell.positions.size(), 0);
  cell.vacancy_site = vac_site;
  return {std::move(cell), vac_site, migrating};
}

// ---------------------------------------------------------------------------
// Stochastic force oracle

ForceSample StochasticForceOracle::sample_force(const Vec& x, const StreamKey& key) const {
  cov::CovarianceOperator sigma = cov_->sigma_at(x);
  Vec force = -mean_->gradient(x);
  if (noise_multiplier_ != 0.0) {
    rng::CounterStream stream(seed_, key.seed, key.iter, key.entity);
    // The raw standard normal draws depend only on (oracle seed, stream key),
    // so paired variants consume identical noise regardless of trajectory.
    Vec xi = stream.normals(sigma.sample_dim());
    force += noise_multiplier_ * sigma.color(xi);
    if (draw_log_ != nullptr) draw_log_->push_back({key, rng::digest(xi)});
  } else if (draw_log_ != nullptr) {
    draw_log_->push_back({key, 0});
  }
  calls_.fetch_add(1, std::memory_order_relaxed);
  return {std::move(force), sigma.scaled(sigma_scale_)};
}

// ---------------------------------------------------------------------------
// FIRE relaxation

Vec relax_fire(const PotentialField& pot, Vec x, const FireOptions& opt) {
  const int n = static_cast<int>(x.size());
  Vec v = Vec::Zero(n);
  double dt = opt.dt0;
  double alpha = 0.1;
  int n_pos = 0;
  for (int it = 0; it < opt.max_iter; ++it) {
    Vec f = -pot.gradient(x);
    const double fmax = f.size() ? f.cwiseAbs().maxCoeff() : 0.0;
    if (fmax <= opt.force_tol) return x;
    const double power = f.dot(v);
    if (power > 0.0) {
      const double vn = v.norm();
      const double fn = f.norm();
      if (fn > 0.0) v = (1.0 - alpha) * v + alpha * vn * f / fn;
      if (++n_pos > 5) {
        dt = std::min(dt * 1.1, opt.dt_max);
        alpha *= 0.99;
      }
    } else {
      v.setZero();
      dt *= 0.5;
      alpha = 0.1;
      n_pos = 0;
    }
    v += dt * f;
    Vec step = dt * v;
    const double smax = step.size() ? step.cwiseAbs().maxCoeff() : 0.0;
    if (smax > opt.max_step) step *= opt.max_step / smax;
    x += step;
  }
  throw std::runtime_error("relax_fire: did not reach force tolerance");
}

}  // namespace saddlekit::pot
