#include "saddlekit/eam.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace saddlekit::pot {

// ---------------------------------------------------------------------------
// Cubic spline

CubicSpline::CubicSpline(std::vector<double> y, double h) : y_(std::move(y)), h_(h) {
  const int n = static_cast<int>(y_.size());
  if (n < 2) throw std::invalid_argument("CubicSpline requires at least 2 points");
  if (!(h > 0.0)) throw std::invalid_argument("CubicSpline requires positive spacing");
  m_.assign(n, 0.0);
  if (n == 2) return;
  // Thomas algorithm for the natural-boundary tridiagonal system.
  const int k = n - 2;
  std::vector<double> diag(k, 4.0), rhs(k);
  for (int i = 0; i < k; ++i) {
    rhs[i] = 6.0 * (y_[i] - 2.0 * y_[i + 1] + y_[i + 2]) / (h_ * h_);
  }
  for (int i = 1; i < k; ++i) {
    const double w = 1.0 / diag[i - 1];
    diag[i] -= w;
    rhs[i] -= w * rhs[i - 1];
  }
  m_[k] = rhs[k - 1] / diag[k - 1];
  for (int i = k - 2; i >= 0; --i) {
    m_[i + 1] = (rhs[i] - m_[i + 2]) / diag[i];
  }
}

void CubicSpline::eval(double x, double& value, double& deriv) const {
  const int n = static_cast<int>(y_.size());
  double t = x / h_;
  int i = static_cast<int>(std::floor(t));
  if (i < 0) i = 0;
  if (i > n - 2) i = n - 2;
  const double xl = i * h_;
  const double dx = x - xl;
  const double dxr = h_ - dx;
  const double ml = m_[i];
  const double mr = m_[i + 1];
  value = (ml * dxr * dxr * dxr + mr * dx * dx * dx) / (6.0 * h_) +
          (y_[i] / h_ - ml * h_ / 6.0) * dxr + (y_[i + 1] / h_ - mr * h_ / 6.0) * dx;
  deriv = (-ml * dxr * dxr + mr * dx * dx) / (2.0 * h_) - (y_[i] / h_ - ml * h_ / 6.0) +
          (y_[i + 1] / h_ - mr * h_ / 6.0);
}

double CubicSpline::value(double x) const {
  double v, d;
  eval(x, v, d);
  return v;
}

double CubicSpline::derivative(double x) const {
  double v, d;
  eval(x, v, d);
  return d;
}

// ---------------------------------------------------------------------------
// setfl parsing

namespace {

class Tokenizer {
 public:
  explicit Tokenizer(std::istream& in) : in_(in) {}

  std::string next_token(const char* what) {
    std::string tok;
    while (true) {
      if (pos_ >= line_.size()) {
        if (!std::getline(in_, line_)) fail(std::string("unexpected end of file reading ") + what);
        ++line_no_;
        pos_ = 0;
        continue;
      }
      while (pos_ < line_.size() && std::isspace(static_cast<unsigned char>(line_[pos_]))) ++pos_;
      if (pos_ >= line_.size()) continue;
      const size_t start = pos_;
      while (pos_ < line_.size() && !std::isspace(static_cast<unsigned char>(line_[pos_]))) ++pos_;
      tok = line_.substr(start, pos_ - start);
      return tok;
    }
  }

  double next_double(const char* what) {
    const std::string tok = next_token(what);
    try {
      size_t used = 0;
      const double v = std::stod(tok, &used);
      if (used != tok.size()) fail("non-numeric token '" + tok + "' reading " + what);
      return v;
    } catch (const std::invalid_argument&) {
      fail("non-numeric token '" + tok + "' reading " + what);
    } catch (const std::out_of_range&) {
      fail("numeric token out of range '" + tok + "' reading " + what);
    }
    return 0.0;
  }

  long next_int(const char* what) {
    const double v = next_double(what);
    const long i = static_cast<long>(v);
    if (static_cast<double>(i) != v) fail(std::string("expected integer reading ") + what);
    return i;
  }

  std::string rest_of_line() {
    std::string r = line_.substr(std::min(pos_, line_.size()));
    pos_ = line_.size();
    return r;
  }

  std::string whole_line(const char* what) {
    if (!std::getline(in_, line_)) fail(std::string("unexpected end of file reading ") + what);
    ++line_no_;
    pos_ = line_.size();
    return line_;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    std::ostringstream oss;
    oss << "setfl parse error at line " << line_no_ << ": " << msg;
    throw std::runtime_error(oss.str());
  }

  int line() const { return line_no_; }

 private:
  std::istream& in_;
  std::string line_;
  size_t pos_ = 0;
  int line_no_ = 0;
};

std::vector<double> read_table(Tokenizer& tok, int n, const char* what) {
  std::vector<double> t(n);
  for (int i = 0; i < n; ++i) t[i] = tok.next_double(what);
  return t;
}

}  // namespace

int EamFsTables::pair_index(int i, int j) const {
  if (j > i) std::swap(i, j);
  return i * (i + 1) / 2 + j;
}

const std::vector<double>& EamFsTables::density_table(int source, int target) const {
  const auto& elem = elements.at(source);
  if (style == SetflStyle::alloy) return elem.density.at(0);
  return elem.density.at(target);
}

EamFsTables parse_setfl(std::istream& in, SetflStyle style) {
  Tokenizer tok(in);
  EamFsTables t;
  t.style = style;
  for (int i = 0; i < 3; ++i) t.comments.push_back(tok.whole_line("comment line"));
  const long nelem = tok.next_int("element count");
  if (nelem < 1) tok.fail("element count must be >= 1");
  t.nelements = static_cast<int>(nelem);
  std::vector<std::string> symbols(t.nelements);
  for (auto& s : symbols) s = tok.next_token("element symbol");

  t.nrho = static_cast<int>(tok.next_int("Nrho"));
  t.drho = tok.next_double("drho");
  t.nr = static_cast<int>(tok.next_int("Nr"));
  t.dr = tok.next_double("dr");
  t.cutoff = tok.next_double("cutoff");
  if (t.nrho <= 1) tok.fail("Nrho must be > 1");
  if (t.nr <= 1) tok.fail("Nr must be > 1");
  if (!(t.drho > 0.0) || !(t.dr > 0.0)) tok.fail("drho and dr must be positive");
  if (t.cutoff < 0.0) tok.fail("cutoff must be nonnegative");

  const int n_density = (style == SetflStyle::fs) ? t.nelements : 1;
  for (int e = 0; e < t.nelements; ++e) {
    EamElement elem;
    elem.symbol = symbols[e];
    elem.atomic_number = static_cast<int>(tok.next_int("atomic number"));
    elem.mass = tok.next_double("mass");
    elem.lattice_constant = tok.next_double("lattice constant");
    elem.lattice_type = tok.next_token("lattice type");
    elem.embedding = read_table(tok, t.nrho, "embedding table");
    for (int p = 0; p < n_density; ++p) {
      elem.density.push_back(read_table(tok, t.nr, "density table"));
    }
    t.elements.push_back(std::move(elem));
  }
  for (int i = 0; i < t.nelements; ++i) {
    for (int j = 0; j <= i; ++j) {
      t.rphi.push_back(read_table(tok, t.nr, "pair table"));
    }
  }
  return t;
}

EamFsTables parse_setfl_file(const std::string& path, SetflStyle style) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open setfl file: " + path);
  return parse_setfl(in, style);
}

namespace {

void write_values(std::ostream& out, const std::vector<double>& v) {
  char buf[40];
  for (size_t i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", v[i]);
    out << buf << (((i + 1) % 5 == 0 || i + 1 == v.size()) ? '\n' : ' ');
  }
}

}  // namespace

void write_setfl(std::ostream& out, const EamFsTables& t) {
  for (int i = 0; i < 3; ++i) {
    out << (i < static_cast<int>(t.comments.size()) ? t.comments[i] : "") << '\n';
  }
  out << t.nelements;
  for (const auto& e : t.elements) out << ' ' << e.symbol;
  out << '\n';
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%d %.17g %d %.17g %.17g", t.nrho, t.drho, t.nr, t.dr, t.cutoff);
  out << buf << '\n';
  for (const auto& e : t.elements) {
    std::snprintf(buf, sizeof(buf), "%d %.17g %.17g %s", e.atomic_number, e.mass,
                  e.lattice_constant, e.lattice_type.c_str());
    out << buf << '\n';
    write_values(out, e.embedding);
    for (const auto& d : e.density) write_values(out, d);
  }
  for (const auto& p : t.rphi) write_values(out, p);
}

void write_setfl_file(const std::string& path, const EamFsTables& tables) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  write_setfl(out, tables);
}

// ---------------------------------------------------------------------------
// Energy and forces

struct EamPotential::Splines {
  std::vector<CubicSpline> embedding;            // per element
  std::vector<std::vector<CubicSpline>> density; // per element, per partner
  std::vector<CubicSpline> rphi;                 // per pair index
};

EamPotential::EamPotential(EamFsTables tables, Supercell reference)
    : tables_(std::move(tables)), reference_(std::move(reference)) {
  auto sp = std::make_shared<Splines>();
  for (const auto& e : tables_.elements) {
    sp->embedding.emplace_back(e.embedding, tables_.drho);
    std::vector<CubicSpline> dens;
    for (const auto& d : e.density) dens.emplace_back(d, tables_.dr);
    sp->density.push_back(std::move(dens));
  }
  for (const auto& p : tables_.rphi) sp->rphi.emplace_back(p, tables_.dr);
  splines_ = std::move(sp);
  cell_inv_ = reference_.cell.inverse();
}

void EamPotential::compute(const Vec& x, double* energy_out, Vec* gradient_out) const {
  const int n = reference_.natoms();
  if (x.size() != 3 * n) throw std::invalid_argument("EamPotential: configuration size mismatch");
  const auto& sp = *splines_;
  const double cutoff = tables_.cutoff;
  const double cutoff2 = cutoff * cutoff;
  const double rmin = tables_.dr;
  const Mat3 cell = reference_.cell;

  const auto& density_spline = [&](int source, int target) -> const CubicSpline& {
    if (tables_.style == SetflStyle::alloy) return sp.density[source][0];
    return sp.density[source][target];
  };

  // Pass 1: electron densities.
  std::vector<double> rho(n, 0.0);
  std::vector<Vec3> pos(n);
  for (int a = 0; a < n; ++a) pos[a] = x.segment<3>(3 * a);
  for (int i = 0; i < n; ++i) {
    const int si = reference_.species[i];
    for (int j = i + 1; j < n; ++j) {
      Vec3 d = pos[j] - pos[i];
      Vec3 f = cell_inv_ * d;
      for (int k = 0; k < 3; ++k) {
        if (reference_.periodic[k]) f[k] -= std::round(f[k]);
      }
      d = cell * f;
      const double r2 = d.squaredNorm();
      if (r2 >= cutoff2) continue;
      const double r = std::sqrt(r2);
      if (r < rmin) throw std::runtime_error("eam_energy_forces: pair distance below table range");
      const int sj = reference_.species[j];
      rho[i] += density_spline(sj, si).value(r);
      rho[j] += density_spline(si, sj).value(r);
    }
  }

  const double rho_max = (tables_.nrho - 1) * tables_.drho;
  std::vector<double> fprime(n, 0.0);
  double energy = 0.0;
  for (int i = 0; i < n; ++i) {
    double rr = rho[i];
    if (rr > rho_max) rr = rho_max;  // clamp at table end
    double fv, fd;
    sp.embedding[reference_.species[i]].eval(rr, fv, fd);
    energy += fv;
    fprime[i] = fd;
  }

  // Pass 2: pair energy and forces.
  Vec grad = Vec::Zero(3 * n);
  for (int i = 0; i < n; ++i) {
    const int si = reference_.species[i];
    for (int j = i + 1; j < n; ++j) {
      Vec3 d = pos[j] - pos[i];
      Vec3 f = cell_inv_ * d;
      for (int k = 0; k < 3; ++k) {
        if (reference_.periodic[k]) f[k] -= std::round(f[k]);
      }
      d = cell * f;
      const double r2 = d.squaredNorm();
      if (r2 >= cutoff2) continue;
      const double r = std::sqrt(r2);
      const int sj = reference_.species[j];
      double rphi_v, rphi_d;
      sp.rphi[tables_.pair_index(si, sj)].eval(r, rphi_v, rphi_d);
      const double phi = rphi_v / r;
      const double dphi = (rphi_d * r - rphi_v) / (r * r);
      energy += phi;
      if (gradient_out != nullptr) {
        double drho_ji, drho_ij, unused;
        density_spline(sj, si).eval(r, unused, drho_ji);
        density_spline(si, sj).eval(r, unused, drho_ij);
        const double de_dr = fprime[i] * drho_ji + fprime[j] * drho_ij + dphi;
        const Vec3 dir = d / r;  // points from i to j
        // dE/dx_i = -de_dr * dir, dE/dx_j = +de_dr * dir.
        grad.segment<3>(3 * i) -= de_dr * dir;
        grad.segment<3>(3 * j) += de_dr * dir;
      }
    }
  }
  if (gradient_out != nullptr) {
    for (int a = 0; a < n; ++a) {
      if (!reference_.frozen.empty() && reference_.frozen[a]) grad.segment<3>(3 * a).setZero();
    }
    *gradient_out = std::move(grad);
  }
  if (energy_out != nullptr) *energy_out = energy;
}

double EamPotential::energy(const Vec& x) const {
  double e = 0.0;
  compute(x, &e, nullptr);
  return e;
}

Vec EamPotential::gradient(const Vec& x) const {
  Vec g;
  compute(x, nullptr, &g);
  return g;
}

std::pair<double, Vec> EamPotential::energy_gradient(const Vec& x) const {
  double e = 0.0;
  Vec g;
  compute(x, &e, &g);
  return {e, std::move(g)};
}

std::pair<double, Vec> eam_energy_forces(const EamFsTables& tables, const Supercell& cell) {
  EamPotential pot(tables, cell);
  auto [e, g] = pot.energy_gradient(cell.flatten());
  return {e, -g};
}

// ---------------------------------------------------------------------------
// Synthetic tungsten model (Finnis-Sinclair analytic form, tabulated)

EamFsTables synthetic_tungsten_fs(int nrho, int nr) {
  // Finnis-Sinclair W parameters: pair term (r-c)^2 (c0 + c1 r + c2 r^2) for
  // r < c, density (r-d)^2 for r < d, embedding -A sqrt(rho).
  const double c = 3.25, c0 = 47.1346499, c1 = -33.7665655, c2 = 6.2541999;
  const double A = 1.896373, d = 4.400224;
  const double a0 = 3.1652;

  EamFsTables t;
  t.style = SetflStyle::fs;
  t.comments = {"Synthetic Finnis-Sinclair tungsten, tabulated analytic form",
                "Units: eV, Angstrom", "Generated for saddlekit tests and benchmarks"};
  t.nelements = 1;
  t.cutoff = d;
  t.nrho = nrho;
  t.nr = nr;
  t.dr = t.cutoff / (nr - 1);
  // Equilibrium bcc density scale: 8 first neighbors at a0 sqrt(3)/2 plus 6
  // second neighbors at a0; size the rho grid to cover well beyond it.
  const double r1 = a0 * std::sqrt(3.0) / 2.0;
  const double rho_eq = 8.0 * (r1 - d) * (r1 - d) + 6.0 * (a0 - d) * (a0 - d);
  const double rho_max = 4.0 * rho_eq;
  t.drho = rho_max / (nrho - 1);

  EamElement w;
  w.symbol = "W";
  w.atomic_number = 74;
  w.mass = 183.84;
  w.lattice_constant = a0;
  w.lattice_type = "bcc";
  w.embedding.resize(nrho);
  for (int i = 0; i < nrho; ++i) {
    const double rho = i * t.drho;
    w.embedding[i] = -A * std::sqrt(rho);
  }
  std::vector<double> dens(nr);
  for (int i = 0; i < nr; ++i) {
    const double r = i * t.dr;
    dens[i] = (r < d) ? (r - d) * (r - d) : 0.0;
  }
  w.density.push_back(std::move(dens));
  t.elements.push_back(std::move(w));

  std::vector<double> rphi(nr);
  for (int i = 0; i < nr; ++i) {
    const double r = i * t.dr;
    const double phi = (r < c) ? (r - c) * (r - c) * (c0 + c1 * r + c2 * r * r) : 0.0;
    rphi[i] = r * phi;
  }
  t.rphi.push_back(std::move(rphi));
  return t;
}

}  // namespace saddlekit::pot
