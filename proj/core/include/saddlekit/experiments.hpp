#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "saddlekit/config.hpp"
#include "saddlekit/report.hpp"
#include "saddlekit/types.hpp"

namespace saddlekit::bench {

/// Per-variant, per-seed results of one experiment.
struct VariantSeries {
  std::string name;
  std::vector<double> final_errors;
  std::vector<double> final_residuals;
  std::vector<int> successes;
  std::vector<std::vector<double>> traj;  // per-seed trajectory (barrier error or residual)
  std::vector<std::uint64_t> calls;

  double mean_final_error() const;
};

struct NebExperimentResult {
  std::vector<VariantSeries> variants;
  double reference_barrier = 1.0;
  const VariantSeries& series(const std::string& name) const;
};

/// Six-variant analytic NEB benchmark with paired seeds and matched budgets.
NebExperimentResult run_neb_experiment(const ExperimentConfig& cfg);

/// Atomistic vacancy-hop benchmark; final errors are reported in meV against
/// the deterministic reference barrier.
NebExperimentResult run_wvac_experiment(const ExperimentConfig& cfg);

struct SweepCell {
  double theta = 0.0;
  double sigma_n = 0.0;
  double mean_std = 0.0, mean_diag = 0.0, mean_ua = 0.0;
  double p_ua_lt_std = 1.0, p_ua_lt_diag = 1.0;
};

struct SweepResult {
  std::vector<SweepCell> cells;
  int ua_beats_std = 0;
  int ua_beats_diag = 0;
};

SweepResult run_sweep(const ExperimentConfig& cfg);

struct DimerExperimentResult {
  VariantSeries std_series;
  VariantSeries ua_series;
};

DimerExperimentResult run_dimer_experiment(const ExperimentConfig& cfg);

struct RateResult {
  std::vector<std::string> variant_names;
  std::vector<double> slopes;
  std::vector<std::vector<double>> mean_residuals;  // per variant, by iteration
  double control_slope = 0.0;  // synthetic c/k sequence fit
  double plateau_ratio = 0.0;  // mean residual at the horizon vs 10 before it
};

RateResult run_rate_check(const ExperimentConfig& cfg);

struct ProjRule {
  std::string rule;  // euclidean | g_orth | oblique
  std::vector<Vec> terminals;
  std::vector<double> dist_classical;
  std::vector<double> dist_shifted;
};

struct ProjDemoResult {
  std::vector<ProjRule> rules;
};

ProjDemoResult run_projection_demo(const ExperimentConfig& cfg);

// Report emission (seeds.csv, trajectory.csv, summary.txt under cfg.out_dir).
void emit_neb_report(const ExperimentConfig& cfg, const NebExperimentResult& res);
void emit_sweep_report(const ExperimentConfig& cfg, const SweepResult& res);
void emit_dimer_report(const ExperimentConfig& cfg, const DimerExperimentResult& res);
void emit_rate_report(const ExperimentConfig& cfg, const RateResult& res);
void emit_projdemo_report(const ExperimentConfig& cfg, const ProjDemoResult& res);

/// Runs indices [0, n) on up to `threads` workers; any scheduling yields the
/// same stored results because tasks write disjoint slots.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

std::string provenance(const ExperimentConfig& cfg);

}  // namespace saddlekit::bench
