#include <doctest.h>

#include <cmath>

#include "saddlekit/covariance.hpp"
#include "saddlekit/potentials.hpp"
#include "saddlekit/rng.hpp"

using namespace saddlekit;
using cov::CovarianceOperator;
using cov::MetricParams;

namespace {

Vec make_vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  int i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

Mat random_psd(int d, rng::CounterStream& stream, double eig_min = 0.0) {
  Mat A(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) A(i, j) = stream.next_normal();
  Mat S = A * A.transpose() / d;
  S.diagonal().array() += eig_min;
  return S;
}

CovarianceOperator random_block_local(int d, int n_blocks, int block_size,
                                      rng::CounterStream& stream) {
  std::vector<cov::CovBlock> blocks;
  for (int b = 0; b < n_blocks; ++b) {
    std::vector<int> idx;
    while (static_cast<int>(idx.size()) < block_size) {
      const int i = static_cast<int>(stream.next_u64() % d);
      if (std::find(idx.begin(), idx.end(), i) == idx.end()) idx.push_back(i);
    }
    blocks.push_back({idx, random_psd(block_size, stream)});
  }
  return CovarianceOperator::block_local(d, std::move(blocks));
}

}  // namespace

TEST_CASE("apply_sigma matches the variant definitions") {
  // Diagonal: componentwise product.
  auto diag = CovarianceOperator::diagonal(make_vec({1.0, 4.0}));
  Vec z = make_vec({1.0, 1.0});
  Vec y = cov::apply_sigma(diag, z);
  CHECK(y[0] == doctest::Approx(1.0));
  CHECK(y[1] == doctest::Approx(4.0));

  // LowRank with U = I reduces to C.
  Mat U = Mat::Identity(2, 2);
  Mat C = Mat::Zero(2, 2);
  C(0, 0) = 2.0;
  C(1, 1) = 3.0;
  auto lr = CovarianceOperator::low_rank(U, C);
  y = cov::apply_sigma(lr, z);
  CHECK(y[0] == doctest::Approx(2.0));
  CHECK(y[1] == doctest::Approx(3.0));

  // BlockLocal apply equals the densified matrix on random vectors.
  rng::CounterStream stream(71, 1);
  auto blk = random_block_local(12, 5, 3, stream);
  Mat dense = blk.densify();
  for (int t = 0; t < 20; ++t) {
    Vec zz = stream.normals(12);
    Vec lhs = cov::apply_sigma(blk, zz);
    Vec rhs = dense * zz;
    CHECK((lhs - rhs).norm() <= 1e-12 * std::max(1.0, rhs.norm()));
  }
}

TEST_CASE("apply_sigma rejects dimension mismatch") {
  auto diag = CovarianceOperator::diagonal(make_vec({1.0, 4.0}));
  CHECK_THROWS_AS(cov::apply_sigma(diag, make_vec({1.0, 2.0, 3.0})), std::invalid_argument);
}

TEST_CASE("apply_metric solves the shifted system per variant") {
  MetricParams p;
  p.lambda = 0.5;
  p.solve_tol = 1e-8;

  // Sigma = 0: y = z / lambda.
  auto zeros = CovarianceOperator::dense(Mat::Zero(2, 2));
  Vec y = cov::apply_metric(zeros, p, make_vec({1.0, 2.0}));
  CHECK(y[0] == doctest::Approx(2.0));
  CHECK(y[1] == doctest::Approx(4.0));

  // Diagonal: componentwise reciprocal.
  p.lambda = 1.0;
  auto diag = CovarianceOperator::diagonal(make_vec({1.0, 3.0}));
  y = cov::apply_metric(diag, p, make_vec({2.0, 8.0}));
  CHECK(y[0] == doctest::Approx(1.0));
  CHECK(y[1] == doctest::Approx(2.0));

  // LowRank via Woodbury against a dense Cholesky oracle.
  rng::CounterStream stream(72);
  const int d = 20, r = 3;
  Mat U(d, r);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < r; ++j) U(i, j) = stream.next_normal();
  Mat C = random_psd(r, stream);
  auto lr = CovarianceOperator::low_rank(U, C);
  Mat dense = U * C * U.transpose();
  p.lambda = 0.7;
  Mat shifted = dense + p.lambda * Mat::Identity(d, d);
  Eigen::LLT<Mat> llt(shifted);
  for (int t = 0; t < 20; ++t) {
    Vec z = stream.normals(d);
    Vec got = cov::apply_metric(lr, p, z);
    Vec want = llt.solve(z);
    CHECK((got - want).norm() <= 1e-9 * std::max(1.0, want.norm()));
  }
}

TEST_CASE("apply_metric errors") {
  auto diag = CovarianceOperator::diagonal(make_vec({1.0, 3.0}));
  MetricParams p;
  p.lambda = 0.0;
  CHECK_THROWS_AS(cov::apply_metric(diag, p, make_vec({1.0, 1.0})), std::invalid_argument);
  p.lambda = -1.0;
  CHECK_THROWS_AS(cov::apply_metric(diag, p, make_vec({1.0, 1.0})), std::invalid_argument);
}

TEST_CASE("metric solve residual and spectral bound across variants") {
  rng::CounterStream stream(73);
  const int d = 12;
  std::vector<CovarianceOperator> ops;
  ops.push_back(CovarianceOperator::dense(random_psd(d, stream)));
  ops.push_back(CovarianceOperator::diagonal(stream.normals(d).cwiseAbs()));
  ops.push_back(random_block_local(d, 5, 3, stream));
  {
    Mat U(d, 4);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < 4; ++j) U(i, j) = stream.next_normal();
    ops.push_back(CovarianceOperator::low_rank(U, random_psd(4, stream)));
  }
  MetricParams p;
  p.solve_tol = 1e-8;
  int checks = 0;
  for (const auto& op : ops) {
    for (int t = 0; t < 25; ++t) {
      const double lambda = 0.05 + stream.next_uniform();
      p.lambda = lambda;
      Vec z = stream.normals(d);
      Vec y = cov::apply_metric(op, p, z);
      Vec resid = op.apply(y) + lambda * y - z;
      CHECK(resid.norm() <= 1e-6 * z.norm());       // solve contract
      CHECK(y.norm() <= z.norm() / lambda + 1e-9);  // |G z| <= |z| / lambda
      ++checks;
    }
  }
  CHECK(checks == 100);
}

TEST_CASE("trace normalization rescales to dimension") {
  rng::CounterStream stream(74);
  const int d = 6;
  Mat S = random_psd(d, stream);
  MetricParams p;
  p.lambda = 0.3;
  p.normalize_trace = true;
  cov::Metric G(CovarianceOperator::dense(S), p);
  // trace of the normalized metric equals d (exact for dense).
  Mat shifted = S + p.lambda * Mat::Identity(d, d);
  const double tr = shifted.inverse().trace();
  CHECK(G.scale() == doctest::Approx(d / tr));
}

TEST_CASE("logdet per variant") {
  auto diag = CovarianceOperator::diagonal(make_vec({1.0, 3.0}));
  CHECK(cov::logdet(diag, 1.0) == doctest::Approx(std::log(2.0) + std::log(4.0)));

  auto zeros = CovarianceOperator::dense(Mat::Zero(5, 5));
  CHECK(cov::logdet(zeros, 1.0) == doctest::Approx(0.0));

  rng::CounterStream stream(75);
  const int d = 8, r = 2;
  Mat U(d, r);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < r; ++j) U(i, j) = stream.next_normal();
  Mat C = random_psd(r, stream);
  auto lr = CovarianceOperator::low_rank(U, C);
  auto dense = CovarianceOperator::dense(U * C * U.transpose());
  const double lambda = 0.4;
  CHECK(std::abs(cov::logdet(lr, lambda) - cov::logdet(dense, lambda)) <= 1e-10);

  CHECK_THROWS_AS(cov::logdet(diag, 0.0), std::invalid_argument);
}

TEST_CASE("logdet monotone in lambda") {
  rng::CounterStream stream(76);
  auto op = CovarianceOperator::dense(random_psd(5, stream));
  double prev = cov::logdet(op, 0.1);
  for (double lambda : {0.2, 0.5, 1.0, 3.0}) {
    const double cur = cov::logdet(op, lambda);
    CHECK(cur > prev);
    prev = cur;
  }
}

namespace {

/// 1D covariance field Sigma(x) = x^2 + 1.
class Scalar1DField final : public cov::CovarianceField {
 public:
  int dim() const override { return 1; }
  CovarianceOperator sigma_at(const Vec& x) const override {
    Vec v(1);
    v[0] = x[0] * x[0] + 1.0;
    return CovarianceOperator::diagonal(v);
  }
};

}  // namespace

TEST_CASE("logdet_grad_dir") {
  // Spatially constant field: derivative vanishes in any direction.
  rng::CounterStream stream77(77);
  pot::ConstantField constant(CovarianceOperator::dense(random_psd(3, stream77)));
  Vec x0 = make_vec({0.3, -0.2, 0.9});
  Vec u0 = make_vec({1.0, -1.0, 0.5}).normalized();
  CHECK(std::abs(cov::logdet_grad_dir(constant, x0, u0, 1.0)) <= 1e-9);

  // Closed form: d/dx log(x^2 + 2) = 2x / (x^2 + 2) = 2/3 at x = 1.
  Scalar1DField field;
  Vec x1 = make_vec({1.0});
  Vec u1 = make_vec({1.0});
  CHECK(cov::logdet_grad_dir(field, x1, u1, 1.0) == doctest::Approx(2.0 / 3.0).epsilon(1e-5));

  // Richardson step-halving consistency on the 2D benchmark field.
  pot::TubeField2D tube{pot::TubeField2D::Params{}};
  Vec xc = make_vec({0.3, 0.2});
  Vec uc = make_vec({0.6, -0.8});
  const double lambda = 0.01;
  const double full = cov::logdet_grad_dir(tube, xc, uc, lambda);
  // Recompute with a halved step by hand.
  const double eps = 0.5e-5 * std::max(1.0, xc.norm());
  const double halved = (cov::logdet(tube.sigma_at(xc + eps * uc), lambda) -
                         cov::logdet(tube.sigma_at(xc - eps * uc), lambda)) /
                        (2.0 * eps);
  CHECK(std::abs(full - halved) <= 1e-4);
}

TEST_CASE("ensemble_covariance") {
  MetricParams p;
  p.s_cal = 1.0;
  p.shrink_rho = 0.0;
  p.sigma_floor = 0.0;
  std::vector<Vec> samples = {make_vec({1.0, 0.0}), make_vec({-1.0, 0.0})};
  auto op = cov::ensemble_covariance(samples, p);
  Mat S = op.densify();
  CHECK(S(0, 0) == doctest::Approx(2.0));
  CHECK(S(0, 1) == doctest::Approx(0.0));
  CHECK(S(1, 0) == doctest::Approx(0.0));
  CHECK(S(1, 1) == doctest::Approx(0.0));

  // rho = 1 with the diagonal pattern leaves an already-diagonal S unchanged.
  p.shrink_rho = 1.0;
  cov::BlockPattern diag_pattern = {{0}, {1}};
  Mat S2 = cov::ensemble_covariance(samples, p, diag_pattern).densify();
  CHECK((S2 - S).norm() <= 1e-14);

  CHECK_THROWS_AS(cov::ensemble_covariance({make_vec({1.0, 0.0})}, p), std::invalid_argument);

  // Monte Carlo consistency against a known covariance.
  Mat truth(2, 2);
  truth << 1.0, 0.5, 0.5, 2.0;
  auto truth_op = CovarianceOperator::dense(truth);
  rng::CounterStream stream(78);
  std::vector<Vec> draws;
  for (int i = 0; i < 500; ++i) draws.push_back(truth_op.sample(stream));
  p.shrink_rho = 0.0;
  Mat est = cov::ensemble_covariance(draws, p).densify();
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) CHECK(std::abs(est(i, j) - truth(i, j)) <= 0.3);
}

TEST_CASE("ensemble_covariance stays PSD") {
  rng::CounterStream stream(79);
  MetricParams p;
  p.sigma_floor = 1e-12;
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 2 + static_cast<int>(stream.next_u64() % 5);
    const int m = 2 + static_cast<int>(stream.next_u64() % 6);
    std::vector<Vec> samples;
    for (int i = 0; i < m; ++i) samples.push_back(stream.normals(d));
    p.shrink_rho = stream.next_uniform();
    // Random partition pattern (the atomwise-block use case): each index in
    // exactly one block, so the masked matrix keeps principal submatrices.
    cov::BlockPattern pattern;
    std::vector<int> cur;
    for (int i = 0; i < d; ++i) {
      cur.push_back(i);
      if (stream.next_u64() % 2 == 0 || i == d - 1) {
        pattern.push_back(cur);
        cur.clear();
      }
    }
    auto op = cov::ensemble_covariance(samples, p, pattern);
    Eigen::SelfAdjointEigenSolver<Mat> es(op.densify());
    CHECK(es.eigenvalues().minCoeff() >= -1e-10);
  }
}

TEST_CASE("calibrate_nll") {
  // Closed form: S = I (d = 4), sigma_floor = 0 -> s^2 = mean |r|^2 / d.
  std::vector<CovarianceOperator> covs;
  std::vector<Vec> residuals;
  // Residuals with mean |r|^2 / d = 2.0 exactly.
  residuals.push_back(make_vec({2.0, 2.0, 0.0, 0.0}));   // |r|^2 = 8
  residuals.push_back(make_vec({0.0, 0.0, 2.0, -2.0}));  // |r|^2 = 8
  for (size_t i = 0; i < residuals.size(); ++i)
    covs.push_back(CovarianceOperator::dense(Mat::Identity(4, 4)));
  const double s = cov::calibrate_nll(residuals, covs, 0.0);
  CHECK(s * s == doctest::Approx(2.0).epsilon(1e-4));

  // All-zero residuals: the NLL is monotone in s, so the search hits the
  // lower bound s^2 = 1e-6.
  std::vector<Vec> zero = {Vec::Zero(3), Vec::Zero(3)};
  std::vector<CovarianceOperator> ident = {CovarianceOperator::dense(Mat::Identity(3, 3)),
                                           CovarianceOperator::dense(Mat::Identity(3, 3))};
  const double s0 = cov::calibrate_nll(zero, ident, 1.0);
  CHECK(s0 * s0 <= 1.1e-6);

  CHECK_THROWS_AS(cov::calibrate_nll({}, {}, 0.0), std::invalid_argument);
}

TEST_CASE("calibrate_nll recovers a synthetic scale") {
  rng::CounterStream stream(80);
  const double s_true = 3.0;
  const int d = 3, q_count = 200;
  std::vector<CovarianceOperator> covs;
  std::vector<Vec> residuals;
  for (int q = 0; q < q_count; ++q) {
    Mat S = random_psd(d, stream, 0.2);
    auto scaled = CovarianceOperator::dense(s_true * s_true * S);
    residuals.push_back(scaled.sample(stream));
    covs.push_back(CovarianceOperator::dense(S));
  }
  const double s_hat = cov::calibrate_nll(residuals, covs, 0.0);
  CHECK(std::abs(s_hat - s_true) / s_true <= 0.10);
}

TEST_CASE("directional_variance_from_energies") {
  // Identical members: zero spread.
  auto same = [](const Vec& x) { return std::vector<double>{x[0], x[0], x[0]}; };
  Vec x = make_vec({0.4, -0.1});
  Vec u = make_vec({1.0, 0.0});
  CHECK(cov::directional_variance_from_energies(same, x, u, 0.01) == doctest::Approx(0.0));

  // Linear members E_m(x) = c_m (u . x): the estimator is exactly Var(c_m).
  std::vector<double> cs = {0.5, -1.0, 2.0, 0.25};
  auto linear = [&](const Vec& xx) {
    std::vector<double> out;
    for (double c : cs) out.push_back(c * (u.dot(xx)));
    return out;
  };
  double m = 0.0;
  for (double c : cs) m += c;
  m /= cs.size();
  double var = 0.0;
  for (double c : cs) var += (c - m) * (c - m);
  var /= (cs.size() - 1);
  CHECK(cov::directional_variance_from_energies(linear, x, u, 0.3) == doctest::Approx(var));

  auto single = [](const Vec&) { return std::vector<double>{1.0}; };
  CHECK_THROWS_AS(cov::directional_variance_from_energies(single, x, u, 0.1),
                  std::invalid_argument);

  // Monte Carlo agreement with u' Sigma u for a linear force spread.
  rng::CounterStream stream(81);
  Mat Sigma(2, 2);
  Sigma << 0.8, 0.3, 0.3, 1.5;
  auto sigma_op = CovarianceOperator::dense(Sigma);
  // Members with force error f_m drawn once: E_m(x) = Ebar(x) - f_m . x gives
  // force spread with covariance Sigma.
  std::vector<Vec> ferr;
  for (int i = 0; i < 64; ++i) ferr.push_back(sigma_op.sample(stream));
  auto members = [&](const Vec& xx) {
    std::vector<double> out;
    for (const auto& f : ferr) out.push_back(0.5 * xx.squaredNorm() - f.dot(xx));
    return out;
  };
  Vec dir = make_vec({0.6, 0.8});
  const double est = cov::directional_variance_from_energies(members, x, dir, 1e-3);
  const double truth = dir.dot(Sigma * dir);
  CHECK(std::abs(est - truth) / truth <= 0.20);
}

TEST_CASE("power iteration matches a dense eigensolve") {
  rng::CounterStream stream(82);
  Mat S = random_psd(6, stream);
  auto op = CovarianceOperator::dense(S);
  Eigen::SelfAdjointEigenSolver<Mat> es(S);
  const double want = es.eigenvalues().maxCoeff();
  CHECK(cov::power_iteration_lambda_max(op) == doctest::Approx(want).epsilon(1e-6));
}

TEST_CASE("operator sampling matches its covariance (Monte Carlo)") {
  rng::CounterStream stream(83);
  Mat S = random_psd(3, stream, 0.1);
  auto op = CovarianceOperator::dense(S);
  Mat acc = Mat::Zero(3, 3);
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    Vec s = op.sample(stream);
    acc += s * s.transpose();
  }
  acc /= n;
  CHECK((acc - S).norm() / S.norm() <= 0.10);
}

TEST_CASE("block CG reports non-convergence with the residual") {
  // A block operator with a huge condition number and an intentionally tiny
  // iteration budget cannot fail here because block-Jacobi is exact for
  // non-overlapping blocks; overlapping blocks exercise the CG path.
  rng::CounterStream stream(84);
  auto op = random_block_local(10, 6, 4, stream);
  MetricParams p;
  p.lambda = 1e-3;
  p.solve_tol = 1e-8;
  Vec z = stream.normals(10);
  Vec y = cov::apply_metric(op, p, z);
  Vec resid = op.apply(y) + p.lambda * y - z;
  CHECK(resid.norm() <= p.solve_tol * z.norm());
}
