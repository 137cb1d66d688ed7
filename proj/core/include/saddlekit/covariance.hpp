#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <variant>
#include <vector>

#include "saddlekit/rng.hpp"
#include "saddlekit/types.hpp"

namespace saddlekit::cov {

/// One local covariance patch: a small dense PSD block acting on a subset of
/// the global coordinates.  Blocks may overlap.
struct CovBlock {
  std::vector<int> indices;
  Mat B;
};

struct DenseCov {
  Mat S;
};
struct DiagonalCov {
  Vec v;
};
struct BlockLocalCov {
  int dim = 0;
  std::vector<CovBlock> blocks;
};
struct LowRankCov {
  Mat U;  // d x r
  Mat C;  // r x r symmetric PSD
};

/// Symmetric PSD covariance operator in one of four structural variants.
/// All variants expose products, exact traces and diagonals, factor-form
/// sampling, and densification (for tests and small-dimension fallbacks).
class CovarianceOperator {
 public:
  CovarianceOperator() : storage_(DiagonalCov{Vec::Zero(0)}) {}

  static CovarianceOperator dense(Mat S);
  static CovarianceOperator diagonal(Vec v);
  static CovarianceOperator block_local(int dim, std::vector<CovBlock> blocks);
  static CovarianceOperator low_rank(Mat U, Mat C);
  static CovarianceOperator zero(int dim) { return diagonal(Vec::Zero(dim)); }

  int dim() const;
  Vec apply(const Vec& z) const;
  double trace() const;
  Vec diagonal_entries() const;
  Mat densify() const;

  /// Number of standard normal draws one sample consumes (d for dense and
  /// diagonal, the summed block sizes for block-local, r for low rank).
  int sample_dim() const;

  /// Applies the covariance square-root factor to a standard normal vector:
  /// color(xi) ~ N(0, Sigma).  Dense uses an eigendecomposition square root;
  /// the structured variants use factor forms.
  Vec color(const Vec& xi) const;

  /// Draws Sigma^{1/2} xi with xi taken from `stream`.
  Vec sample(rng::CounterStream& stream) const { return color(stream.normals(sample_dim())); }

  /// Returns a copy scaled by `factor` (>= 0), preserving the variant.
  CovarianceOperator scaled(double factor) const;

  /// Replaces the operator by its diagonal.
  CovarianceOperator diagonal_part() const { return diagonal(diagonal_entries()); }

  bool is_dense() const { return std::holds_alternative<DenseCov>(storage_); }
  bool is_diagonal_variant() const { return std::holds_alternative<DiagonalCov>(storage_); }
  bool is_block_local() const { return std::holds_alternative<BlockLocalCov>(storage_); }
  bool is_low_rank() const { return std::holds_alternative<LowRankCov>(storage_); }

  const DenseCov& as_dense() const { return std::get<DenseCov>(storage_); }
  const DiagonalCov& as_diagonal() const { return std::get<DiagonalCov>(storage_); }
  const BlockLocalCov& as_block_local() const { return std::get<BlockLocalCov>(storage_); }
  const LowRankCov& as_low_rank() const { return std::get<LowRankCov>(storage_); }

 private:
  std::variant<DenseCov, DiagonalCov, BlockLocalCov, LowRankCov> storage_;
};

struct MetricParams {
  double lambda = 0.0;        // metric shift in G = (Sigma + lambda I)^{-1}
  double lambda_H = 0.0;      // rotation-metric shift (Dimer)
  double sigma_floor = 0.0;
  double s_cal = 1.0;
  double shrink_rho = 0.0;    // blend toward a block-sparse pattern, in [0,1]
  double solve_tol = 1e-8;    // relative residual tolerance for iterative solves
  bool normalize_trace = false;  // rescale G so trace(G) = dim
};

Vec apply_sigma(const CovarianceOperator& op, const Vec& z);

/// y ~= (Sigma + lambda I)^{-1} z with relative residual <= p.solve_tol.
/// Dense -> Cholesky, Diagonal -> reciprocal, LowRank -> Woodbury,
/// BlockLocal -> preconditioned CG with a block-Jacobi preconditioner.
/// With p.normalize_trace, the result is scaled by dim / trace(G).
Vec apply_metric(const CovarianceOperator& op, const MetricParams& p, const Vec& z);

/// log det(Sigma + lambda I), lambda > 0.
double logdet(const CovarianceOperator& op, double lambda);

/// Reliability metric G = (Sigma + lambda I)^{-1} with factorizations and the
/// optional trace normalization computed once at construction.  Copies share
/// the immutable state, so a Metric is cheap to pass around and thread-safe.
class Metric {
 public:
  Metric() = default;  // Euclidean: G = I
  Metric(CovarianceOperator op, const MetricParams& p);

  bool euclidean() const { return impl_ == nullptr; }
  Vec apply(const Vec& z) const;
  double scale() const;
  /// |z|_G = sqrt(z' G z).
  double norm(const Vec& z) const;
  double quadratic(const Vec& z) const;

 private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
};

/// Spatially varying covariance model: x -> Sigma(x).
class CovarianceField {
 public:
  virtual ~CovarianceField() = default;
  virtual int dim() const = 0;
  virtual CovarianceOperator sigma_at(const Vec& x) const = 0;
};

/// u' grad_x log det(Sigma(x) + lambda I) by central differences along u with
/// step 1e-5 * max(1, |x|).
double logdet_grad_dir(const CovarianceField& field, const Vec& x, const Vec& u, double lambda);

using BlockPattern = std::vector<std::vector<int>>;

/// Calibrated, optionally shrunk sample covariance of force samples:
/// s_cal^2 [(1-rho) S + rho Pi_B S] + sigma_floor^2 I, returned dense.
CovarianceOperator ensemble_covariance(const std::vector<Vec>& samples, const MetricParams& p,
                                       const std::optional<BlockPattern>& block_pattern = {});

/// Scalar calibration factor minimizing the Gaussian negative log-likelihood
/// of validation residuals under s^2 S_q + sigma_floor^2 I, by golden-section
/// search over log s^2 on [1e-6, 1e6] (tolerance 1e-8 in log space).
double calibrate_nll(const std::vector<Vec>& residuals,
                     const std::vector<CovarianceOperator>& raw_covs, double sigma_floor);

/// Sample variance over ensemble members of the centered energy difference
/// -(E_m(x + eps u) - E_m(x - eps u)) / (2 eps); estimates u' Sigma_F u when
/// only member energies are available.
double directional_variance_from_energies(
    const std::function<std::vector<double>(const Vec&)>& member_energies, const Vec& x,
    const Vec& u, double eps);

/// Largest eigenvalue by power iteration (50 steps, tolerance 1e-8) with a
/// deterministic pseudo-random start vector.
double power_iteration_lambda_max(const CovarianceOperator& op, int max_steps = 50,
                                  double tol = 1e-8);

}  // namespace saddlekit::cov
