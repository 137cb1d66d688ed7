#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "saddlekit/potentials.hpp"
#include "saddlekit/ua_dimer.hpp"
#include "saddlekit/ua_neb.hpp"

namespace saddlekit::bench {

/// Configuration or CLI usage problem; maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  std::string experiment;  // neb2d | sweep2d | dimer2d | wvac | rate2d | projdemo

  // [run]
  int seeds = 1;
  int iterations = 0;
  std::vector<std::string> variants;
  int threads = 0;  // 0 = resolve from SADDLEKIT_THREADS or hardware
  int seed_offset = 0;
  std::uint64_t base_seed = 2025;
  std::string out_dir;

  // [neb]
  neb::NebParams neb;

  // [dimer]
  dimer::DimerParams dimer;
  double dimer_h = 0.055;
  double dimer_start_x1 = -0.62;
  double dimer_start_x2 = 0.02;
  double dimer_v0_x1 = 0.8;
  double dimer_v0_x2 = 0.6;
  double dimer_success_radius = 0.08;

  // [oracle]
  double noise_multiplier = 0.0;
  double metric_sigma_scale = -1.0;  // < 0: multiplier squared (noise covariance)

  // [tube]
  pot::TubeField2D::Params tube;

  // [core]
  double core_radius = 4.2;
  double midpoint_width = 0.30;
  double core_floor = 0.010;
  double parallel_amp = 0.045;
  double transverse_amp = 0.350;

  // [wvac]
  std::string setfl_path;
  std::string setfl_style = "fs";
  int n_cells = 4;
  double relax_force_tol = 1e-4;
  int reference_iterations = 320;

  // [sweep]
  std::vector<double> sweep_thetas;
  std::vector<double> sweep_sigma_n;
  int sweep_seeds = 16;

  // [demo]
  int demo_steps = 20000;
  double demo_dt = 1e-3;

  // [rate]
  int rate_fit_min = 5;
  int rate_fit_max = 40;

  static ExperimentConfig defaults_for(const std::string& experiment);
  void apply_file(const std::string& path);
  void validate() const;
  int resolved_threads() const;

  /// Every effective field as (key, value) in a fixed order, for the config
  /// echo in reports.
  std::vector<std::pair<std::string, std::string>> echo() const;
  /// Deterministic hash of the echo, used in the provenance string.
  std::uint64_t config_hash() const;
};

}  // namespace saddlekit::bench
