#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "saddlekit/covariance.hpp"
#include "saddlekit/types.hpp"

namespace saddlekit::pot {

/// Deterministic mean potential: energy and exact gradient on flat
/// configuration vectors.
class PotentialField {
 public:
  virtual ~PotentialField() = default;
  virtual int dim() const = 0;
  virtual double energy(const Vec& x) const = 0;
  virtual Vec gradient(const Vec& x) const = 0;
};

/// Central finite-difference gradient, used as the test oracle for analytic
/// gradients.
Vec fd_gradient(const PotentialField& pot, const Vec& x, double step = 1e-5);

/// E(x) = (x1^2 - 1)^2 + k (x2 - a (1 - x1^2))^2.
/// Minima at (+-1, 0), index-one saddle at (0, a) with barrier 1.
class AnalyticDoubleWell final : public PotentialField {
 public:
  explicit AnalyticDoubleWell(double a = 0.38, double k = 7.5) : a_(a), k_(k) {}
  int dim() const override { return 2; }
  double energy(const Vec& x) const override;
  Vec gradient(const Vec& x) const override;
  Mat hessian(const Vec& x) const;
  double a() const { return a_; }
  double k() const { return k_; }

 private:
  double a_, k_;
};

std::pair<double, Vec> analytic_energy_grad(const Vec& x, double a, double k);

/// Samples of the exact MEP x2 = a (1 - x1^2) with x1 uniform on [-1, 1],
/// plus the exact barrier (= 1).
std::pair<std::vector<Vec>, double> analytic_mep_reference(double a, int n_points);

/// E(x) = 1/2 x' H x.
class QuadraticDemo final : public PotentialField {
 public:
  explicit QuadraticDemo(Mat H) : H_(std::move(H)) {}
  int dim() const override { return static_cast<int>(H_.rows()); }
  double energy(const Vec& x) const override { return 0.5 * x.dot(H_ * x); }
  Vec gradient(const Vec& x) const override { return H_ * x; }
  const Mat& H() const { return H_; }

 private:
  Mat H_;
};

// ---------------------------------------------------------------------------
// Covariance fields

class ConstantField final : public cov::CovarianceField {
 public:
  explicit ConstantField(cov::CovarianceOperator op) : op_(std::move(op)) {}
  int dim() const override { return op_.dim(); }
  cov::CovarianceOperator sigma_at(const Vec&) const override { return op_; }

 private:
  cov::CovarianceOperator op_;
};

/// Anisotropic 2D covariance tube centered on the transition region of the
/// analytic double well.  The eigenframe is the local MEP tangent/normal
/// frame rotated by `rotation_theta`; a Gaussian envelope in x1 (width 0.35,
/// centered at the saddle) gates the whole anisotropic part, leaving the
/// isotropic floor far away.
class TubeField2D final : public cov::CovarianceField {
 public:
  struct Params {
    double sigma_t_amp = 0.030;
    double sigma_n_amp = 0.260;
    double rotation_theta = 0.0;
    double floor_t = 0.012;
    double floor_n = 0.020;
    double iso_floor = 0.006;
    double envelope_width = 0.35;
    double a = 0.38;  // MEP shape parameter of the underlying double well
  };
  explicit TubeField2D(const Params& prm) : prm_(prm) {}
  int dim() const override { return 2; }
  cov::CovarianceOperator sigma_at(const Vec& x) const override;
  const Params& params() const { return prm_; }

 private:
  Params prm_;
};

/// Per-atom 3x3 covariance blocks localized near a vacancy-hop core:
/// a Gaussian envelope in distance to the hop midpoint, gated along the hop
/// coordinate, with transverse/parallel amplitudes relative to the hop axis,
/// plus a global isotropic floor.
class CoreField3D final : public cov::CovarianceField {
 public:
  struct Params {
    Vec3 midpoint = Vec3::Zero();
    Vec3 hop_axis = Vec3::UnitX();  // normalized internally
    double hop_length = 1.0;
    double core_radius = 4.2;       // Angstrom
    double midpoint_width = 0.30;   // fraction of the hop length
    double floor = 0.010;           // eV/Angstrom
    double parallel_amp = 0.045;    // eV/Angstrom
    double transverse_amp = 0.350;  // eV/Angstrom
    Mat3 cell = Mat3::Identity();   // columns are cell vectors (for min image)
    bool periodic = true;
  };
  explicit CoreField3D(const Params& prm);
  int dim() const override { return 3 * natoms_hint_; }
  cov::CovarianceOperator sigma_at(const Vec& x) const override;
  void set_natoms(int n) { natoms_hint_ = n; }
  const Params& params() const { return prm_; }

 private:
  Params prm_;
  Mat3 cell_inv_;
  Vec3 axis_unit_;
  int natoms_hint_ = 0;
};

// ---------------------------------------------------------------------------
// Supercell geometry

/// Periodic atomistic cell with an optional vacancy.  Positions are absolute
/// Cartesian coordinates in Angstrom; `cell` columns are the lattice vectors.
struct Supercell {
  Mat3 cell = Mat3::Identity();
  std::vector<Vec3> positions;
  std::vector<int> species;  // index into the potential's element table
  std::array<bool, 3> periodic{true, true, true};
  std::vector<char> frozen;
  int vacancy_lattice_index = -1;
  Vec3 vacancy_site = Vec3::Zero();

  int natoms() const { return static_cast<int>(positions.size()); }
  Vec flatten() const;
  void set_from_flat(const Vec& x);
  /// Minimum-image displacement for a raw difference vector.
  Vec3 min_image(const Vec3& d) const;
};

struct VacancyCell {
  Supercell cell;
  Vec3 vacancy_site = Vec3::Zero();
  int migrating_atom = -1;
};

/// bcc lattice of n_cells^3 conventional cells (2 atoms each) with one atom
/// removed; the migrating atom is a nearest neighbor of the vacancy.
VacancyCell build_vacancy_supercell(int n_cells, double a0, const std::string& species);

// ---------------------------------------------------------------------------
// Stochastic force oracle

struct StreamKey {
  std::uint64_t seed = 0;
  std::uint64_t iter = 0;
  std::uint64_t entity = 0;  // image index or endpoint id
};

struct ForceSample {
  Vec force;
  cov::CovarianceOperator sigma;
};

struct DrawRecord {
  StreamKey key;
  std::uint64_t digest;
};

/// Mean potential plus prescribed covariance field queried through a
/// counter-based noise source.  A sample is a deterministic function of
/// (oracle seed, stream key), independent of call order and thread.
class StochasticForceOracle {
 public:
  StochasticForceOracle(const PotentialField& mean, const cov::CovarianceField& cov_field,
                        double noise_multiplier, std::uint64_t seed)
      : mean_(&mean),
        cov_(&cov_field),
        noise_multiplier_(noise_multiplier),
        sigma_scale_(noise_multiplier * noise_multiplier),
        seed_(seed) {}

  /// F_hat = -grad E(x) + m * Sigma(x)^{1/2} xi, paired with the reported
  /// covariance sigma_scale * Sigma(x) (default m^2, the covariance of the
  /// injected noise).
  ForceSample sample_force(const Vec& x, const StreamKey& key) const;

  double mean_energy(const Vec& x) const { return mean_->energy(x); }
  Vec mean_gradient(const Vec& x) const { return mean_->gradient(x); }
  /// Covariance handed to the optimizer; not counted as a force call.
  cov::CovarianceOperator covariance_at(const Vec& x) const {
    return cov_->sigma_at(x).scaled(sigma_scale_);
  }

  /// Overrides the scale of the covariance reported to the optimizer,
  /// decoupling it from the injected-noise variance.
  void set_sigma_scale(double scale) { sigma_scale_ = scale; }
  double sigma_scale() const { return sigma_scale_; }

  const PotentialField& mean() const { return *mean_; }
  const cov::CovarianceField& covariance_field() const { return *cov_; }
  double noise_multiplier() const { return noise_multiplier_; }
  std::uint64_t seed() const { return seed_; }

  std::uint64_t calls() const { return calls_.load(); }
  void reset_calls() const { calls_.store(0); }

  /// When set, every sample appends (key, digest of the xi draws); used by the
  /// paired-noise audits.  Not thread-safe; enable only in sequential runs.
  void set_draw_log(std::vector<DrawRecord>* log) const { draw_log_ = log; }

 private:
  const PotentialField* mean_;
  const cov::CovarianceField* cov_;
  double noise_multiplier_;
  double sigma_scale_;
  std::uint64_t seed_;
  mutable std::atomic<std::uint64_t> calls_{0};
  mutable std::vector<DrawRecord>* draw_log_ = nullptr;
};

// ---------------------------------------------------------------------------
// Deterministic relaxation

struct FireOptions {
  double force_tol = 1e-4;
  int max_iter = 20000;
  double dt0 = 0.02;
  double dt_max = 0.2;
  double max_step = 0.1;
};

/// FIRE descent to |F|_inf <= force_tol; throws on non-convergence.
Vec relax_fire(const PotentialField& pot, Vec x0, const FireOptions& opt = {});

}  // namespace saddlekit::pot
