#include "saddlekit/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "saddlekit/rng.hpp"

namespace saddlekit::bench {

namespace {

const std::set<std::string> kExperiments = {"neb2d", "sweep2d", "dimer2d",
                                            "wvac",  "rate2d",  "projdemo"};

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config value for '" + key + "' is not a number: '" + v + "'");
  }
}

int to_int(const std::string& key, const std::string& v) {
  const double x = to_double(key, v);
  const int i = static_cast<int>(x);
  if (static_cast<double>(i) != x) throw ConfigError("config value for '" + key + "' is not an integer");
  return i;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config value for '" + key + "' is not a boolean: '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> to_double_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& item : split_list(v)) out.push_back(to_double(key, item));
  return out;
}

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", x);
  return buf;
}

std::string join_doubles(const std::vector<double>& xs) {
  std::string out;
  for (size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    out += fmt_double(xs[i]);
  }
  return out;
}

std::string join_strings(const std::vector<std::string>& xs) {
  std::string out;
  for (size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    out += xs[i];
  }
  return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::defaults_for(const std::string& experiment) {
  if (!kExperiments.count(experiment)) throw ConfigError("unknown experiment: " + experiment);
  ExperimentConfig c;
  c.experiment = experiment;
  c.out_dir = "out/" + experiment;
  c.neb.climb_start = 250;
  c.neb.gamma0 = 0.004;
  c.neb.gamma_k0 = 180.0;
  c.neb.gamma_p = 1.25;

  if (experiment == "neb2d") {
    c.seeds = 200;
    c.iterations = 500;
    c.variants = {"std", "pen", "al", "metric", "diag", "ua"};
    c.noise_multiplier = 10.0;
  } else if (experiment == "sweep2d") {
    c.seeds = 16;
    c.iterations = 500;
    c.variants = {"std", "diag", "ua"};
    c.noise_multiplier = 10.0;
    c.sweep_thetas = {0.0,          M_PI / 12.0, M_PI / 6.0, M_PI / 4.0,
                      M_PI / 3.0,   5.0 * M_PI / 12.0,       M_PI / 2.0};
    c.sweep_sigma_n = {0.05, 0.10, 0.18, 0.26, 0.36};
  } else if (experiment == "rate2d") {
    c.seeds = 80;
    c.iterations = 60;
    c.variants = {"std", "pen", "al", "metric", "diag", "ua"};
    c.noise_multiplier = 10.0;
  } else if (experiment == "dimer2d") {
    c.seeds = 200;
    c.iterations = 260;
    c.noise_multiplier = 3.0;
  } else if (experiment == "wvac") {
    c.seeds = 24;
    c.iterations = 340;
    c.variants = {"std", "diag", "ua"};
    c.noise_multiplier = 1.0;
    c.neb.n_images = 7;
    c.neb.k_s = 1.1;
    c.neb.alpha = 0.018;
    c.neb.trust_radius = 0.055;
    c.neb.lambda = 0.020;
    c.neb.gamma0 = 0.0;  // no penalty in the atomistic benchmark
    c.neb.climb_start = 200;
  } else if (experiment == "projdemo") {
    c.seeds = 1;
    c.iterations = 0;
  }
  return c;
}

void ExperimentConfig::apply_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(line_no) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string full = section.empty() ? key : section + "." + key;

    if (full == "run.seeds") seeds = to_int(full, value);
    else if (full == "run.iterations") iterations = to_int(full, value);
    else if (full == "run.variants") variants = split_list(value);
    else if (full == "run.threads") threads = to_int(full, value);
    else if (full == "run.seed_offset") seed_offset = to_int(full, value);
    else if (full == "run.base_seed") base_seed = static_cast<std::uint64_t>(to_double(full, value));
    else if (full == "run.out") out_dir = value;
    else if (full == "neb.n_images") neb.n_images = to_int(full, value);
    else if (full == "neb.k_s") neb.k_s = to_double(full, value);
    else if (full == "neb.alpha") neb.alpha = to_double(full, value);
    else if (full == "neb.alpha_k0") neb.alpha_k0 = to_double(full, value);
    else if (full == "neb.trust_radius") neb.trust_radius = to_double(full, value);
    else if (full == "neb.lambda") neb.lambda = to_double(full, value);
    else if (full == "neb.gamma0") neb.gamma0 = to_double(full, value);
    else if (full == "neb.gamma_k0") neb.gamma_k0 = to_double(full, value);
    else if (full == "neb.gamma_p") neb.gamma_p = to_double(full, value);
    else if (full == "neb.omega_tau0") neb.omega_tau0 = to_double(full, value);
    else if (full == "neb.omega_tau_k0") neb.omega_tau_k0 = to_double(full, value);
    else if (full == "neb.omega_tau_p") neb.omega_tau_p = to_double(full, value);
    else if (full == "neb.reparam_interval") neb.reparam_interval = to_int(full, value);
    else if (full == "neb.climb_start") neb.climb_start = to_int(full, value);
    else if (full == "neb.rho_s") neb.rho_s = to_double(full, value);
    else if (full == "neb.epsilon") neb.epsilon = to_double(full, value);
    else if (full == "neb.use_trust_ratio") neb.use_trust_ratio = to_bool(full, value);
    else if (full == "neb.normalize_trace") neb.normalize_trace = to_bool(full, value);
    else if (full == "neb.solve_tol") neb.solve_tol = to_double(full, value);
    else if (full == "neb.al_refresh_interval") neb.al_refresh_interval = to_int(full, value);
    else if (full == "neb.al_refresh_count") neb.al_refresh_count = to_int(full, value);
    else if (full == "neb.stop_enabled") neb.stop_enabled = to_bool(full, value);
    else if (full == "neb.eps_force") neb.eps_force = to_double(full, value);
    else if (full == "neb.eps_spring") neb.eps_spring = to_double(full, value);
    else if (full == "neb.eps_unc") neb.eps_unc = to_double(full, value);
    else if (full == "neb.eta_var") neb.eta_var = to_double(full, value);
    else if (full == "neb.eta_rel") neb.eta_rel = to_double(full, value);
    else if (full == "neb.eta_bar") neb.eta_bar = to_double(full, value);
    else if (full == "neb.kappa_E") neb.kappa_E = to_double(full, value);
    else if (full == "dimer.alpha") dimer.alpha = to_double(full, value);
    else if (full == "dimer.beta") dimer.beta = to_double(full, value);
    else if (full == "dimer.lambda") dimer.lambda = to_double(full, value);
    else if (full == "dimer.lambda_H") dimer.lambda_H = to_double(full, value);
    else if (full == "dimer.trust_radius") dimer.trust_radius = to_double(full, value);
    else if (full == "dimer.theta_max") dimer.theta_max = to_double(full, value);
    else if (full == "dimer.eta_H") dimer.eta_H = to_double(full, value);
    else if (full == "dimer.h_min") dimer.h_min = to_double(full, value);
    else if (full == "dimer.h_max") dimer.h_max = to_double(full, value);
    else if (full == "dimer.eta_hand") dimer.eta_hand = to_double(full, value);
    else if (full == "dimer.normalize_trace") dimer.normalize_trace = to_bool(full, value);
    else if (full == "dimer.solve_tol") dimer.solve_tol = to_double(full, value);
    else if (full == "dimer.h") dimer_h = to_double(full, value);
    else if (full == "dimer.start_x1") dimer_start_x1 = to_double(full, value);
    else if (full == "dimer.start_x2") dimer_start_x2 = to_double(full, value);
    else if (full == "dimer.v0_x1") dimer_v0_x1 = to_double(full, value);
    else if (full == "dimer.v0_x2") dimer_v0_x2 = to_double(full, value);
    else if (full == "dimer.success_radius") dimer_success_radius = to_double(full, value);
    else if (full == "oracle.noise_multiplier") noise_multiplier = to_double(full, value);
    else if (full == "oracle.metric_sigma_scale") metric_sigma_scale = to_double(full, value);
    else if (full == "tube.sigma_t_amp") tube.sigma_t_amp = to_double(full, value);
    else if (full == "tube.sigma_n_amp") tube.sigma_n_amp = to_double(full, value);
    else if (full == "tube.rotation_theta") tube.rotation_theta = to_double(full, value);
    else if (full == "tube.floor_t") tube.floor_t = to_double(full, value);
    else if (full == "tube.floor_n") tube.floor_n = to_double(full, value);
    else if (full == "tube.iso_floor") tube.iso_floor = to_double(full, value);
    else if (full == "tube.envelope_width") tube.envelope_width = to_double(full, value);
    else if (full == "core.core_radius") core_radius = to_double(full, value);
    else if (full == "core.midpoint_width") midpoint_width = to_double(full, value);
    else if (full == "core.floor") core_floor = to_double(full, value);
    else if (full == "core.parallel_amp") parallel_amp = to_double(full, value);
    else if (full == "core.transverse_amp") transverse_amp = to_double(full, value);
    else if (full == "wvac.setfl") setfl_path = value;
    else if (full == "wvac.setfl_style") setfl_style = value;
    else if (full == "wvac.n_cells") n_cells = to_int(full, value);
    else if (full == "wvac.relax_force_tol") relax_force_tol = to_double(full, value);
    else if (full == "wvac.reference_iterations") reference_iterations = to_int(full, value);
    else if (full == "sweep.thetas") sweep_thetas = to_double_list(full, value);
    else if (full == "sweep.sigma_n") sweep_sigma_n = to_double_list(full, value);
    else if (full == "sweep.seeds") sweep_seeds = to_int(full, value);
    else if (full == "demo.steps") demo_steps = to_int(full, value);
    else if (full == "demo.dt") demo_dt = to_double(full, value);
    else if (full == "rate.fit_min") rate_fit_min = to_int(full, value);
    else if (full == "rate.fit_max") rate_fit_max = to_int(full, value);
    else throw ConfigError("unknown config key '" + full + "' at line " + std::to_string(line_no));
  }
}

void ExperimentConfig::validate() const {
  if (!kExperiments.count(experiment)) throw ConfigError("unknown experiment: " + experiment);
  if (seeds < 1) throw ConfigError("seeds must be >= 1");
  if (iterations < 0) throw ConfigError("iterations must be >= 0");
  if (experiment != "projdemo" && experiment != "dimer2d" && variants.empty())
    throw ConfigError("variant list must not be empty");
  for (const auto& v : variants) neb::variant_from_string(v);  // throws on unknown
  if (neb.n_images < 1) throw ConfigError("neb.n_images must be >= 1");
  if (!(neb.k_s > 0.0)) throw ConfigError("neb.k_s must be positive");
  if (!(neb.alpha > 0.0)) throw ConfigError("neb.alpha must be positive");
  if (!(neb.trust_radius > 0.0)) throw ConfigError("neb.trust_radius must be positive");
  if (!(neb.lambda > 0.0)) throw ConfigError("neb.lambda must be positive");
  if (experiment == "wvac") {
    if (n_cells < 2) throw ConfigError("wvac.n_cells must be >= 2");
    if (setfl_style != "fs" && setfl_style != "alloy")
      throw ConfigError("wvac.setfl_style must be 'fs' or 'alloy'");
  }
  if (experiment == "sweep2d" && (sweep_thetas.empty() || sweep_sigma_n.empty()))
    throw ConfigError("sweep grids must not be empty");
}

int ExperimentConfig::resolved_threads() const {
  if (threads > 0) return threads;
  if (const char* env = std::getenv("SADDLEKIT_THREADS")) {
    const int t = std::atoi(env);
    if (t > 0) return t;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

std::vector<std::pair<std::string, std::string>> ExperimentConfig::echo() const {
  std::vector<std::pair<std::string, std::string>> e;
  auto add = [&](const std::string& k, const std::string& v) { e.emplace_back(k, v); };
  add("experiment", experiment);
  add("run.seeds", std::to_string(seeds));
  add("run.iterations", std::to_string(iterations));
  add("run.variants", join_strings(variants));
  add("run.seed_offset", std::to_string(seed_offset));
  add("run.base_seed", std::to_string(base_seed));
  add("run.out", out_dir);
  add("neb.n_images", std::to_string(neb.n_images));
  add("neb.k_s", fmt_double(neb.k_s));
  add("neb.alpha", fmt_double(neb.alpha));
  add("neb.alpha_k0", fmt_double(neb.alpha_k0));
  add("neb.trust_radius", fmt_double(neb.trust_radius));
  add("neb.lambda", fmt_double(neb.lambda));
  add("neb.gamma0", fmt_double(neb.gamma0));
  add("neb.gamma_k0", fmt_double(neb.gamma_k0));
  add("neb.gamma_p", fmt_double(neb.gamma_p));
  add("neb.omega_tau0", fmt_double(neb.omega_tau0));
  add("neb.reparam_interval", std::to_string(neb.reparam_interval));
  add("neb.climb_start", std::to_string(neb.climb_start));
  add("neb.rho_s", fmt_double(neb.rho_s));
  add("neb.normalize_trace", neb.normalize_trace ? "true" : "false");
  add("neb.solve_tol", fmt_double(neb.solve_tol));
  add("neb.use_trust_ratio", neb.use_trust_ratio ? "true" : "false");
  add("neb.al_refresh_interval", std::to_string(neb.al_refresh_interval));
  add("neb.al_refresh_count", std::to_string(neb.al_refresh_count));
  add("dimer.alpha", fmt_double(dimer.alpha));
  add("dimer.beta", fmt_double(dimer.beta));
  add("dimer.lambda", fmt_double(dimer.lambda));
  add("dimer.lambda_H", fmt_double(dimer.lambda_H));
  add("dimer.trust_radius", fmt_double(dimer.trust_radius));
  add("dimer.theta_max", fmt_double(dimer.theta_max));
  add("dimer.eta_H", fmt_double(dimer.eta_H));
  add("dimer.h", fmt_double(dimer_h));
  add("dimer.start", fmt_double(dimer_start_x1) + "," + fmt_double(dimer_start_x2));
  add("dimer.v0", fmt_double(dimer_v0_x1) + "," + fmt_double(dimer_v0_x2));
  add("dimer.success_radius", fmt_double(dimer_success_radius));
  add("oracle.noise_multiplier", fmt_double(noise_multiplier));
  add("oracle.metric_sigma_scale", fmt_double(metric_sigma_scale));
  add("tube.sigma_t_amp", fmt_double(tube.sigma_t_amp));
  add("tube.sigma_n_amp", fmt_double(tube.sigma_n_amp));
  add("tube.rotation_theta", fmt_double(tube.rotation_theta));
  add("tube.floor_t", fmt_double(tube.floor_t));
  add("tube.floor_n", fmt_double(tube.floor_n));
  add("tube.iso_floor", fmt_double(tube.iso_floor));
  add("tube.envelope_width", fmt_double(tube.envelope_width));
  add("core.core_radius", fmt_double(core_radius));
  add("core.midpoint_width", fmt_double(midpoint_width));
  add("core.floor", fmt_double(core_floor));
  add("core.parallel_amp", fmt_double(parallel_amp));
  add("core.transverse_amp", fmt_double(transverse_amp));
  add("wvac.setfl", setfl_path);
  add("wvac.setfl_style", setfl_style);
  add("wvac.n_cells", std::to_string(n_cells));
  add("wvac.relax_force_tol", fmt_double(relax_force_tol));
  add("wvac.reference_iterations", std::to_string(reference_iterations));
  add("sweep.thetas", join_doubles(sweep_thetas));
  add("sweep.sigma_n", join_doubles(sweep_sigma_n));
  add("sweep.seeds", std::to_string(sweep_seeds));
  add("demo.steps", std::to_string(demo_steps));
  add("demo.dt", fmt_double(demo_dt));
  add("rate.fit_min", std::to_string(rate_fit_min));
  add("rate.fit_max", std::to_string(rate_fit_max));
  return e;
}

std::uint64_t ExperimentConfig::config_hash() const {
  std::uint64_t h = 0x5add1e5ULL;
  for (const auto& [k, v] : echo()) {
    for (char c : k) h = rng::mix64(h ^ static_cast<unsigned char>(c));
    for (char c : v) h = rng::mix64(h ^ static_cast<unsigned char>(c));
  }
  return h;
}

}  // namespace saddlekit::bench
