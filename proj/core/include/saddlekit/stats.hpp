#pragma once

#include <vector>

namespace saddlekit::stats {

double mean(const std::vector<double>& xs);
/// Sample standard deviation (divisor n-1); 0 for n < 2.
double sample_std(const std::vector<double>& xs);
/// Standard error of the mean: sample_std / sqrt(n).
double sem(const std::vector<double>& xs);

/// One-sided Wilcoxon signed-rank p-value for the alternative "second variant
/// smaller", with diffs = first - second (positive diffs support the
/// alternative).  Zero differences are dropped; exact tail enumeration via
/// dynamic programming for n <= 25, normal approximation with continuity and
/// tie correction beyond.
double wilcoxon_one_sided(std::vector<double> paired_diffs);

/// Large-n path of wilcoxon_one_sided: normal approximation with continuity
/// and tie corrections, applicable at any n.
double wilcoxon_one_sided_normal(std::vector<double> paired_diffs);

/// Median of all n(n+1)/2 Walsh averages (d_i + d_j)/2, i <= j.
double hodges_lehmann(const std::vector<double>& paired_diffs);

struct ErrorDecomposition {
  double statistical = 0.0;       // sample std of the barrier estimates
  double optimization_bias = 0.0; // |mean barrier - mean-target barrier|
  double model_bias = 0.0;        // |mean-target - reference|
  double rms_error = 0.0;         // sqrt(mean (b_i - reference)^2)
  bool bound_holds = false;       // rms <= sum of the three terms
};

ErrorDecomposition error_decomposition(const std::vector<double>& per_seed_barriers,
                                       double mean_target_barrier, double ref_barrier);

/// exp(-delta / (k_B T)) with k_B = 8.617333262e-5 eV/K.
double rate_shift(double delta_eV, double T_kelvin);

/// Least-squares slope of log(values[k]) against log(k) over k in
/// [k_min, k_max] (values indexed by iteration).
double loglog_slope(const std::vector<double>& values, int k_min, int k_max);

}  // namespace saddlekit::stats
