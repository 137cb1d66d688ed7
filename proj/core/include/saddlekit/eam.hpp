#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "saddlekit/potentials.hpp"
#include "saddlekit/types.hpp"

namespace saddlekit::pot {

/// Natural cubic spline on the uniform grid x_i = i h, i = 0..n-1.
class CubicSpline {
 public:
  CubicSpline() = default;
  CubicSpline(std::vector<double> y, double h);
  double value(double x) const;
  double derivative(double x) const;
  void eval(double x, double& value, double& deriv) const;
  double x_max() const { return h_ * (static_cast<double>(y_.size()) - 1.0); }

 private:
  std::vector<double> y_;
  std::vector<double> m_;  // second derivatives
  double h_ = 1.0;
};

enum class SetflStyle { alloy, fs };

struct EamElement {
  int atomic_number = 0;
  double mass = 0.0;
  double lattice_constant = 0.0;
  std::string lattice_type;
  std::string symbol;
  std::vector<double> embedding;               // F(rho), Nrho values
  std::vector<std::vector<double>> density;    // alloy: 1 table; fs: one per partner element
};

/// Tabulated EAM/FS potential in setfl layout.  Pair tables store r*phi(r)
/// in eV*Angstrom for pairs (i, j) with i >= j, in file order.
struct EamFsTables {
  SetflStyle style = SetflStyle::alloy;
  std::vector<std::string> comments;  // exactly 3 lines
  int nelements = 0;
  int nrho = 0;
  double drho = 0.0;
  int nr = 0;
  double dr = 0.0;
  double cutoff = 0.0;
  std::vector<EamElement> elements;
  std::vector<std::vector<double>> rphi;  // one table per (i >= j) pair

  int pair_index(int i, int j) const;
  /// Density table of a neighbor of species `source` as seen by an atom of
  /// species `target` (fs); alloy ignores `target`.
  const std::vector<double>& density_table(int source, int target) const;
};

EamFsTables parse_setfl(std::istream& in, SetflStyle style);
EamFsTables parse_setfl_file(const std::string& path, SetflStyle style);
void write_setfl(std::ostream& out, const EamFsTables& tables);
void write_setfl_file(const std::string& path, const EamFsTables& tables);

/// E = sum_i F(rho_i) + 1/2 sum_{i != j} phi(r_ij), rho_i = sum_{j != i} rho(r_ij),
/// with cubic-spline interpolation; forces are the exact negative gradient of
/// the interpolated energy.  Returns (energy in eV, flat 3N forces in eV/A).
std::pair<double, Vec> eam_energy_forces(const EamFsTables& tables, const Supercell& cell);

/// PotentialField adapter evaluating the tabulated potential on flat 3N
/// vectors over a fixed cell/species template.
class EamPotential final : public PotentialField {
 public:
  EamPotential(EamFsTables tables, Supercell reference);
  int dim() const override { return 3 * reference_.natoms(); }
  double energy(const Vec& x) const override;
  Vec gradient(const Vec& x) const override;
  /// Energy and gradient in one pair-loop pass.
  std::pair<double, Vec> energy_gradient(const Vec& x) const;
  const EamFsTables& tables() const { return tables_; }
  const Supercell& reference() const { return reference_; }

 private:
  struct Splines;
  void compute(const Vec& x, double* energy, Vec* gradient) const;

  EamFsTables tables_;
  Supercell reference_;
  std::shared_ptr<const Splines> splines_;
  Mat3 cell_inv_;
};

/// Tabulates an analytic Finnis-Sinclair tungsten model into setfl form.
/// Used for self-contained tests and benchmarks when no external potential
/// file is supplied.
EamFsTables synthetic_tungsten_fs(int nrho = 2000, int nr = 2000);

}  // namespace saddlekit::pot
