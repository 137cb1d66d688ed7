#include "saddlekit/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace saddlekit::stats {

double mean(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double acc = 0.0;
  for (double x : xs) acc += x;
  return acc / static_cast<double>(xs.size());
}

double sample_std(const std::vector<double>& xs) {
  const int n = static_cast<int>(xs.size());
  if (n < 2) return 0.0;
  const double m = mean(xs);
  double acc = 0.0;
  for (double x : xs) acc += (x - m) * (x - m);
  return std::sqrt(acc / (n - 1));
}

double sem(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  return sample_std(xs) / std::sqrt(static_cast<double>(xs.size()));
}

namespace {

struct SignedRanks {
  int n = 0;
  std::vector<long> rank2;     // doubled midranks (integers even with ties)
  std::vector<int> tie_sizes;
  long w2 = 0;                 // doubled W+
  long total2 = 0;
};

SignedRanks signed_ranks(const std::vector<double>& paired_diffs) {
  std::vector<double> d;
  for (double x : paired_diffs) {
    if (x != 0.0) d.push_back(x);
  }
  SignedRanks out;
  out.n = static_cast<int>(d.size());
  if (out.n == 0) return out;
  std::vector<int> order(out.n);
  for (int i = 0; i < out.n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return std::abs(d[a]) < std::abs(d[b]); });
  out.rank2.assign(out.n, 0);
  int i = 0;
  while (i < out.n) {
    int j = i;
    while (j + 1 < out.n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const long doubled = (i + 1) + (j + 1);  // 2 * average rank
    for (int q = i; q <= j; ++q) out.rank2[order[q]] = doubled;
    out.tie_sizes.push_back(j - i + 1);
    i = j + 1;
  }
  for (int q = 0; q < out.n; ++q) {
    out.total2 += out.rank2[q];
    if (d[q] > 0.0) out.w2 += out.rank2[q];
  }
  return out;
}

}  // namespace

double wilcoxon_one_sided_normal(std::vector<double> paired_diffs) {
  const SignedRanks r = signed_ranks(paired_diffs);
  if (r.n == 0) return 1.0;
  const double nn = r.n;
  const double mu = nn * (nn + 1.0) / 4.0;
  double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
  for (int t : r.tie_sizes) var -= (static_cast<double>(t) * t * t - t) / 48.0;
  if (!(var > 0.0)) return 1.0;  // all magnitudes tied to zero spread
  const double w = 0.5 * static_cast<double>(r.w2);
  const double z = (w - mu - 0.5) / std::sqrt(var);
  return 0.5 * std::erfc(z / std::sqrt(2.0));
}

double wilcoxon_one_sided(std::vector<double> paired_diffs) {
  const SignedRanks r = signed_ranks(paired_diffs);
  if (r.n == 0) return 1.0;
  if (r.n > 25) return wilcoxon_one_sided_normal(std::move(paired_diffs));

  // Exact tail: count sign assignments by doubled rank-sum.
  std::vector<double> counts(r.total2 + 1, 0.0);
  counts[0] = 1.0;
  long reach = 0;
  for (int q = 0; q < r.n; ++q) {
    const long rk = r.rank2[q];
    reach += rk;
    for (long s = reach; s >= rk; --s) counts[s] += counts[s - rk];
  }
  double tail = 0.0;
  for (long s = r.w2; s <= r.total2; ++s) tail += counts[s];
  return tail / std::pow(2.0, r.n);
}

double hodges_lehmann(const std::vector<double>& paired_diffs) {
  const int n = static_cast<int>(paired_diffs.size());
  if (n == 0) throw std::invalid_argument("hodges_lehmann requires at least one difference");
  std::vector<double> walsh;
  walsh.reserve(static_cast<size_t>(n) * (n + 1) / 2);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) walsh.push_back(0.5 * (paired_diffs[i] + paired_diffs[j]));
  }
  std::sort(walsh.begin(), walsh.end());
  const size_t m = walsh.size();
  if (m % 2 == 1) return walsh[m / 2];
  return 0.5 * (walsh[m / 2 - 1] + walsh[m / 2]);
}

ErrorDecomposition error_decomposition(const std::vector<double>& per_seed_barriers,
                                       double mean_target_barrier, double ref_barrier) {
  if (per_seed_barriers.size() < 2)
    throw std::invalid_argument("error_decomposition requires at least two seeds");
  ErrorDecomposition out;
  out.statistical = sample_std(per_seed_barriers);
  const double m = mean(per_seed_barriers);
  out.optimization_bias = std::abs(m - mean_target_barrier);
  out.model_bias = std::abs(mean_target_barrier - ref_barrier);
  double acc = 0.0;
  for (double b : per_seed_barriers) acc += (b - ref_barrier) * (b - ref_barrier);
  out.rms_error = std::sqrt(acc / static_cast<double>(per_seed_barriers.size()));
  out.bound_holds =
      out.rms_error <= out.statistical + out.optimization_bias + out.model_bias + 1e-12;
  return out;
}

double rate_shift(double delta_eV, double T_kelvin) {
  if (!(T_kelvin > 0.0)) throw std::invalid_argument("rate_shift requires T > 0");
  constexpr double k_B = 8.617333262e-5;  // eV/K
  return std::exp(-delta_eV / (k_B * T_kelvin));
}

double loglog_slope(const std::vector<double>& values, int k_min, int k_max) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (int k = k_min; k <= k_max && k < static_cast<int>(values.size()); ++k) {
    if (!(values[k] > 0.0)) continue;
    const double x = std::log(static_cast<double>(k));
    const double y = std::log(values[k]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  if (n < 2) throw std::invalid_argument("loglog_slope: not enough positive samples");
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace saddlekit::stats
