#include "saddlekit/covariance.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace saddlekit::cov {

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

Mat block_shifted(const CovBlock& blk, double lambda) {
  Mat A = blk.B;
  A.diagonal().array() += lambda;
  return A;
}

/// Eigendecomposition square root with tiny negative eigenvalues clamped.
Mat psd_sqrt(const Mat& S) {
  Eigen::SelfAdjointEigenSolver<Mat> es(S);
  if (es.info() != Eigen::Success) throw std::runtime_error("psd_sqrt: eigendecomposition failed");
  Vec ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

CovarianceOperator CovarianceOperator::dense(Mat S) {
  require(S.rows() == S.cols(), "dense covariance must be square");
  CovarianceOperator op;
  op.storage_ = DenseCov{std::move(S)};
  return op;
}

CovarianceOperator CovarianceOperator::diagonal(Vec v) {
  CovarianceOperator op;
  op.storage_ = DiagonalCov{std::move(v)};
  return op;
}

CovarianceOperator CovarianceOperator::block_local(int dim, std::vector<CovBlock> blocks) {
  require(dim >= 0, "block covariance dimension must be nonnegative");
  for (const auto& b : blocks) {
    require(b.B.rows() == b.B.cols(), "covariance block must be square");
    require(static_cast<int>(b.indices.size()) == b.B.rows(),
            "covariance block index set must match block size");
    for (int i : b.indices) require(i >= 0 && i < dim, "covariance block index out of range");
  }
  CovarianceOperator op;
  op.storage_ = BlockLocalCov{dim, std::move(blocks)};
  return op;
}

CovarianceOperator CovarianceOperator::low_rank(Mat U, Mat C) {
  require(C.rows() == C.cols(), "low-rank core must be square");
  require(U.cols() == C.rows(), "low-rank factor shapes mismatch");
  CovarianceOperator op;
  op.storage_ = LowRankCov{std::move(U), std::move(C)};
  return op;
}

int CovarianceOperator::dim() const {
  return std::visit(
      [](const auto& s) -> int {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, DenseCov>) return static_cast<int>(s.S.rows());
        if constexpr (std::is_same_v<T, DiagonalCov>) return static_cast<int>(s.v.size());
        if constexpr (std::is_same_v<T, BlockLocalCov>) return s.dim;
        if constexpr (std::is_same_v<T, LowRankCov>) return static_cast<int>(s.U.rows());
      },
      storage_);
}

Vec CovarianceOperator::apply(const Vec& z) const {
  require(static_cast<int>(z.size()) == dim(), "apply_sigma: dimension mismatch");
  return std::visit(
      [&](const auto& s) -> Vec {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, DenseCov>) {
          return s.S * z;
        } else if constexpr (std::is_same_v<T, DiagonalCov>) {
          return s.v.cwiseProduct(z);
        } else if constexpr (std::is_same_v<T, BlockLocalCov>) {
          Vec y = Vec::Zero(s.dim);
          for (const auto& blk : s.blocks) {
            const int b = static_cast<int>(blk.indices.size());
            Vec zl(b);
            for (int i = 0; i < b; ++i) zl[i] = z[blk.indices[i]];
            Vec yl = blk.B * zl;
            for (int i = 0; i < b; ++i) y[blk.indices[i]] += yl[i];
          }
          return y;
        } else {
          return s.U * (s.C * (s.U.transpose() * z));
        }
      },
      storage_);
}

double CovarianceOperator::trace() const {
  return std::visit(
      [](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, DenseCov>) return s.S.trace();
        if constexpr (std::is_same_v<T, DiagonalCov>) return s.v.sum();
        if constexpr (std::is_same_v<T, BlockLocalCov>) {
          double t = 0.0;
          for (const auto& blk : s.blocks) t += blk.B.trace();
          return t;
        }
        if constexpr (std::is_same_v<T, LowRankCov>) {
          return (s.C * (s.U.transpose() * s.U)).trace();
        }
      },
      storage_);
}

Vec CovarianceOperator::diagonal_entries() const {
  return std::visit(
      [&](const auto& s) -> Vec {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, DenseCov>) {
          return s.S.diagonal();
        } else if constexpr (std::is_same_v<T, DiagonalCov>) {
          return s.v;
        } else if constexpr (std::is_same_v<T, BlockLocalCov>) {
          Vec d = Vec::Zero(s.dim);
          for (const auto& blk : s.blocks) {
            for (size_t i = 0; i < blk.indices.size(); ++i) d[blk.indices[i]] += blk.B(i, i);
          }
          return d;
        } else {
          Mat M = s.U * s.C;  // d x r
          return (M.array() * s.U.array()).rowwise().sum();
        }
      },
      storage_);
}

Mat CovarianceOperator::densify() const {
  return std::visit(
      [](const auto& s) -> Mat {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, DenseCov>) {
          return s.S;
        } else if constexpr (std::is_same_v<T, DiagonalCov>) {
          return Mat(s.v.asDiagonal());
        } else if constexpr (std::is_same_v<T, BlockLocalCov>) {
          Mat M = Mat::Zero(s.dim, s.dim);
          for (const auto& blk : s.blocks) {
            const int b = static_cast<int>(blk.indices.size());
            for (int i = 0; i < b; ++i)
              for (int j = 0; j < b; ++j) M(blk.indices[i], blk.indices[j]) += blk.B(i, j);
          }
          return M;
        } else {
          return s.U * s.C * s.U.transpose();
        }
      },
      storage_);
}

int CovarianceOperator::sample_dim() const {
  return std::visit(
      [](const auto& s) -> int {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, DenseCov>) {
          return static_cast<int>(s.S.rows());
        } else if constexpr (std::is_same_v<T, DiagonalCov>) {
          return static_cast<int>(s.v.size());
        } else if constexpr (std::is_same_v<T, BlockLocalCov>) {
          int n = 0;
          for (const auto& blk : s.blocks) n += static_cast<int>(blk.indices.size());
          return n;
        } else {
          return static_cast<int>(s.C.rows());
        }
      },
      storage_);
}

Vec CovarianceOperator::color(const Vec& xi) const {
  if (static_cast<int>(xi.size()) != sample_dim())
    throw std::invalid_argument("color: wrong number of normal draws");
  return std::visit(
      [&](const auto& s) -> Vec {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, DenseCov>) {
          return psd_sqrt(s.S) * xi;
        } else if constexpr (std::is_same_v<T, DiagonalCov>) {
          return s.v.cwiseMax(0.0).cwiseSqrt().cwiseProduct(xi);
        } else if constexpr (std::is_same_v<T, BlockLocalCov>) {
          Vec y = Vec::Zero(s.dim);
          int offset = 0;
          for (const auto& blk : s.blocks) {
            const int b = static_cast<int>(blk.indices.size());
            Vec yl = psd_sqrt(blk.B) * xi.segment(offset, b);
            for (int i = 0; i < b; ++i) y[blk.indices[i]] += yl[i];
            offset += b;
          }
          return y;
        } else {
          return s.U * (psd_sqrt(s.C) * xi);
        }
      },
      storage_);
}

CovarianceOperator CovarianceOperator::scaled(double factor) const {
  require(factor >= 0.0, "covariance scale factor must be nonnegative");
  return std::visit(
      [&](const auto& s) -> CovarianceOperator {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, DenseCov>) return dense(factor * s.S);
        if constexpr (std::is_same_v<T, DiagonalCov>) return diagonal(factor * s.v);
        if constexpr (std::is_same_v<T, BlockLocalCov>) {
          auto blocks = s.blocks;
          for (auto& b : blocks) b.B *= factor;
          return block_local(s.dim, std::move(blocks));
        }
        if constexpr (std::is_same_v<T, LowRankCov>) return low_rank(s.U, factor * s.C);
      },
      storage_);
}

Vec apply_sigma(const CovarianceOperator& op, const Vec& z) { return op.apply(z); }

// ---------------------------------------------------------------------------
// Metric

struct Metric::Impl {
  CovarianceOperator op;
  MetricParams p;
  int d = 0;
  double scale = 1.0;

  // dense
  Eigen::LLT<Mat> dense_llt;
  // diagonal
  Vec inv_diag;
  // block-local: per-block factors of (B + lambda I) and coverage bookkeeping
  std::vector<Eigen::LLT<Mat>> block_llt;
  std::vector<char> covered;

  Vec solve_raw(const Vec& z) const;
  Vec precondition(const Vec& r) const;
  double trace_G() const;
};

namespace {

Vec woodbury_solve(const LowRankCov& lr, double lambda, const Vec& z) {
  // (lambda I + U C U')^{-1} z = z/lambda - U C (I + U'U C / lambda)^{-1} U'z / lambda^2.
  // The r x r factorization is redone per apply; cross-iteration caching is
  // out of scope for this operator model.
  const int r = static_cast<int>(lr.C.rows());
  Mat K = Mat::Identity(r, r) + (lr.U.transpose() * lr.U) * lr.C / lambda;
  Eigen::PartialPivLU<Mat> lu(K);
  Vec t = lu.solve(lr.U.transpose() * z);
  return z / lambda - lr.U * (lr.C * t) / (lambda * lambda);
}

}  // namespace

Vec Metric::Impl::precondition(const Vec& r) const {
  const auto& s = op.as_block_local();
  Vec y = Vec::Zero(d);
  for (size_t l = 0; l < s.blocks.size(); ++l) {
    const auto& blk = s.blocks[l];
    const int b = static_cast<int>(blk.indices.size());
    Vec rl(b);
    for (int i = 0; i < b; ++i) rl[i] = r[blk.indices[i]];
    Vec yl = block_llt[l].solve(rl);
    for (int i = 0; i < b; ++i) y[blk.indices[i]] += yl[i];
  }
  for (int i = 0; i < d; ++i) {
    if (!covered[i]) y[i] += r[i] / p.lambda;
  }
  return y;
}

Vec Metric::Impl::solve_raw(const Vec& z) const {
  if (op.is_dense()) return dense_llt.solve(z);
  if (op.is_diagonal_variant()) return inv_diag.cwiseProduct(z);
  if (op.is_low_rank()) return woodbury_solve(op.as_low_rank(), p.lambda, z);

  // BlockLocal: preconditioned conjugate gradient on (Sigma + lambda I) y = z.
  const int max_iter = 200;
  const double bnorm = z.norm();
  if (bnorm == 0.0) return Vec::Zero(d);
  const double tol = p.solve_tol * bnorm;
  Vec x = Vec::Zero(d);
  Vec r = z;
  Vec zv = precondition(r);
  Vec pdir = zv;
  double rz = r.dot(zv);
  double rnorm = r.norm();
  for (int it = 0; it < max_iter && rnorm > tol; ++it) {
    Vec Ap = op.apply(pdir) + p.lambda * pdir;
    const double pAp = pdir.dot(Ap);
    if (pAp <= 0.0) throw std::runtime_error("metric solve: operator not positive definite");
    const double a = rz / pAp;
    x += a * pdir;
    r -= a * Ap;
    rnorm = r.norm();
    zv = precondition(r);
    const double rz_new = r.dot(zv);
    pdir = zv + (rz_new / rz) * pdir;
    rz = rz_new;
  }
  if (rnorm > tol) {
    std::ostringstream oss;
    oss << "metric solve: CG did not converge in " << max_iter
        << " iterations, relative residual " << rnorm / bnorm;
    throw std::runtime_error(oss.str());
  }
  return x;
}

double Metric::Impl::trace_G() const {
  if (op.is_dense()) {
    Mat inv = dense_llt.solve(Mat::Identity(d, d));
    return inv.trace();
  }
  if (op.is_diagonal_variant()) return inv_diag.sum();
  // Hutchinson probing with Rademacher probes; the probe stream is fixed so
  // repeated runs see the same trace estimate.
  const int n_probes = 64;
  rng::CounterStream stream(0x48757463ULL, static_cast<std::uint64_t>(d), n_probes, 0);
  double acc = 0.0;
  for (int q = 0; q < n_probes; ++q) {
    Vec z(d);
    for (int i = 0; i < d; ++i) z[i] = stream.next_sign();
    acc += z.dot(solve_raw(z));
  }
  return acc / n_probes;
}

Metric::Metric(CovarianceOperator op, const MetricParams& p) {
  if (!(p.lambda > 0.0)) throw std::invalid_argument("metric requires lambda > 0");
  if (!(p.solve_tol > 0.0 && p.solve_tol <= 1e-2))
    throw std::invalid_argument("metric solve_tol must be in (0, 1e-2]");
  auto impl = std::make_shared<Impl>();
  impl->op = std::move(op);
  impl->p = p;
  impl->d = impl->op.dim();
  if (impl->op.is_dense()) {
    Mat A = impl->op.as_dense().S;
    A.diagonal().array() += p.lambda;
    impl->dense_llt.compute(A);
    if (impl->dense_llt.info() != Eigen::Success)
      throw std::runtime_error("metric: Cholesky failed (covariance not PSD)");
  } else if (impl->op.is_diagonal_variant()) {
    impl->inv_diag = (impl->op.as_diagonal().v.array() + p.lambda).inverse().matrix();
  } else if (impl->op.is_block_local()) {
    const auto& s = impl->op.as_block_local();
    impl->covered.assign(impl->d, 0);
    impl->block_llt.reserve(s.blocks.size());
    for (const auto& blk : s.blocks) {
      Eigen::LLT<Mat> llt(block_shifted(blk, p.lambda));
      if (llt.info() != Eigen::Success)
        throw std::runtime_error("metric: block Cholesky failed (block not PSD)");
      impl->block_llt.push_back(std::move(llt));
      for (int i : blk.indices) impl->covered[i] = 1;
    }
  }
  if (p.normalize_trace && impl->d > 0) {
    const double tr = impl->trace_G();
    if (!(tr > 0.0)) throw std::runtime_error("metric: nonpositive trace estimate");
    impl->scale = impl->d / tr;
  }
  impl_ = std::move(impl);
}

Vec Metric::apply(const Vec& z) const {
  if (!impl_) return z;
  if (static_cast<int>(z.size()) != impl_->d)
    throw std::invalid_argument("metric apply: dimension mismatch");
  return impl_->scale * impl_->solve_raw(z);
}

double Metric::scale() const { return impl_ ? impl_->scale : 1.0; }

double Metric::quadratic(const Vec& z) const { return std::max(0.0, z.dot(apply(z))); }

double Metric::norm(const Vec& z) const { return std::sqrt(quadratic(z)); }

Vec apply_metric(const CovarianceOperator& op, const MetricParams& p, const Vec& z) {
  if (static_cast<int>(z.size()) != op.dim())
    throw std::invalid_argument("apply_metric: dimension mismatch");
  return Metric(op, p).apply(z);
}

// ---------------------------------------------------------------------------
// log-determinants

double logdet(const CovarianceOperator& op, double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("logdet requires lambda > 0");
  if (op.is_diagonal_variant()) {
    return (op.as_diagonal().v.array() + lambda).log().sum();
  }
  if (op.is_low_rank()) {
    // Matrix determinant lemma: det(lambda I + UCU') = lambda^d det(I + U'U C / lambda).
    const auto& lr = op.as_low_rank();
    const int d = static_cast<int>(lr.U.rows());
    const int r = static_cast<int>(lr.C.rows());
    Mat K = Mat::Identity(r, r) + (lr.U.transpose() * lr.U) * lr.C / lambda;
    const double det = Eigen::PartialPivLU<Mat>(K).determinant();
    if (!(det > 0.0)) throw std::runtime_error("logdet: low-rank core not PSD");
    return d * std::log(lambda) + std::log(det);
  }
  if (op.is_block_local()) {
    const auto& s = op.as_block_local();
    std::vector<char> covered(s.dim, 0);
    bool overlap = false;
    for (const auto& blk : s.blocks) {
      for (int i : blk.indices) {
        if (covered[i]) overlap = true;
        covered[i] = 1;
      }
    }
    if (!overlap) {
      double acc = 0.0;
      int n_covered = 0;
      for (const auto& blk : s.blocks) {
        Eigen::LLT<Mat> llt(block_shifted(blk, lambda));
        if (llt.info() != Eigen::Success)
          throw std::runtime_error("logdet: block Cholesky failed (block not PSD)");
        acc += 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
        n_covered += static_cast<int>(blk.indices.size());
      }
      return acc + (s.dim - n_covered) * std::log(lambda);
    }
    return logdet(CovarianceOperator::dense(op.densify()), lambda);
  }
  Mat A = op.as_dense().S;
  A.diagonal().array() += lambda;
  Eigen::LLT<Mat> llt(A);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("logdet: Cholesky failed (covariance not PSD)");
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

double logdet_grad_dir(const CovarianceField& field, const Vec& x, const Vec& u, double lambda) {
  const double eps = 1e-5 * std::max(1.0, x.norm());
  const double plus = logdet(field.sigma_at(x + eps * u), lambda);
  const double minus = logdet(field.sigma_at(x - eps * u), lambda);
  return (plus - minus) / (2.0 * eps);
}

// ---------------------------------------------------------------------------
// Ensemble covariance and calibration

CovarianceOperator ensemble_covariance(const std::vector<Vec>& samples, const MetricParams& p,
                                       const std::optional<BlockPattern>& block_pattern) {
  if (samples.size() < 2) throw std::invalid_argument("ensemble_covariance requires M >= 2 samples");
  const int d = static_cast<int>(samples.front().size());
  for (const auto& s : samples) {
    if (static_cast<int>(s.size()) != d)
      throw std::invalid_argument("ensemble_covariance: sample dimension mismatch");
  }
  const int m = static_cast<int>(samples.size());
  Vec mean = Vec::Zero(d);
  for (const auto& s : samples) mean += s;
  mean /= m;
  Mat S = Mat::Zero(d, d);
  for (const auto& s : samples) {
    Vec r = s - mean;
    S.noalias() += r * r.transpose();
  }
  S /= (m - 1);

  Mat blended = S;
  if (p.shrink_rho != 0.0) {
    Mat projected = S;
    if (block_pattern) {
      Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> allowed(d, d);
      allowed.setConstant(false);
      for (const auto& blk : *block_pattern) {
        for (int i : blk)
          for (int j : blk) allowed(i, j) = true;
      }
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
          if (!allowed(i, j)) projected(i, j) = 0.0;
    }
    blended = (1.0 - p.shrink_rho) * S + p.shrink_rho * projected;
  }
  Mat out = p.s_cal * p.s_cal * blended;
  out.diagonal().array() += p.sigma_floor * p.sigma_floor;
  return CovarianceOperator::dense(std::move(out));
}

double calibrate_nll(const std::vector<Vec>& residuals,
                     const std::vector<CovarianceOperator>& raw_covs, double sigma_floor) {
  if (residuals.empty() || residuals.size() != raw_covs.size())
    throw std::invalid_argument("calibrate_nll: residuals and covariances must be nonempty and matched");
  std::vector<Mat> dense;
  dense.reserve(raw_covs.size());
  for (const auto& op : raw_covs) dense.push_back(op.densify());

  auto nll = [&](double log_s2) {
    const double s2 = std::exp(log_s2);
    double acc = 0.0;
    for (size_t q = 0; q < dense.size(); ++q) {
      Mat A = s2 * dense[q];
      A.diagonal().array() += sigma_floor * sigma_floor;
      Eigen::LLT<Mat> llt(A);
      if (llt.info() != Eigen::Success)
        throw std::runtime_error("calibrate_nll: Cholesky failed (covariance not PSD)");
      acc += 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
      acc += residuals[q].dot(llt.solve(residuals[q]));
    }
    return acc;
  };

  double a = std::log(1e-6);
  double b = std::log(1e6);
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c1 = b - inv_phi * (b - a);
  double c2 = a + inv_phi * (b - a);
  double f1 = nll(c1);
  double f2 = nll(c2);
  while (b - a > 1e-8) {
    if (f1 <= f2) {
      b = c2;
      c2 = c1;
      f2 = f1;
      c1 = b - inv_phi * (b - a);
      f1 = nll(c1);
    } else {
      a = c1;
      c1 = c2;
      f1 = f2;
      c2 = a + inv_phi * (b - a);
      f2 = nll(c2);
    }
  }
  const double log_s2 = 0.5 * (a + b);
  return std::exp(0.5 * log_s2);
}

double directional_variance_from_energies(
    const std::function<std::vector<double>(const Vec&)>& member_energies, const Vec& x,
    const Vec& u, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("directional variance requires eps > 0");
  const std::vector<double> plus = member_energies(x + eps * u);
  const std::vector<double> minus = member_energies(x - eps * u);
  if (plus.size() != minus.size()) throw std::invalid_argument("member energy counts mismatch");
  const int m = static_cast<int>(plus.size());
  if (m < 2) throw std::invalid_argument("directional variance requires M >= 2 members");
  std::vector<double> deriv(m);
  double mean = 0.0;
  for (int i = 0; i < m; ++i) {
    deriv[i] = -(plus[i] - minus[i]) / (2.0 * eps);
    mean += deriv[i];
  }
  mean /= m;
  double acc = 0.0;
  for (int i = 0; i < m; ++i) acc += (deriv[i] - mean) * (deriv[i] - mean);
  return acc / (m - 1);
}

double power_iteration_lambda_max(const CovarianceOperator& op, int max_steps, double tol) {
  const int d = op.dim();
  if (d == 0) return 0.0;
  rng::CounterStream stream(0x504f5745ULL, static_cast<std::uint64_t>(d), 0, 0);
  Vec v = stream.normals(d);
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < max_steps; ++it) {
    Vec w = op.apply(v);
    const double nw = w.norm();
    if (nw == 0.0) return 0.0;
    v = w / nw;
    const double next = v.dot(op.apply(v));
    if (std::abs(next - lambda) <= tol * std::max(1.0, std::abs(next))) return next;
    lambda = next;
  }
  return lambda;
}

}  // namespace saddlekit::cov
