#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "cosgp/errors.hpp"
#include "cosgp/linalg.hpp"

namespace cosgp::metrics {

inline double rmspe(const std::vector<double>& errors) {
  if (errors.empty()) throw EmptyInput("rmspe of empty error vector");
  double s = 0.0;
  for (const double e : errors) s += e * e;
  return std::sqrt(s / static_cast<double>(errors.size()));
}

/// Median absolute prediction error; even counts take the midpoint of the
/// two central order statistics.
inline double mpe(const std::vector<double>& errors) {
  if (errors.empty()) throw EmptyInput("mpe of empty error vector");
  std::vector<double> a(errors.size());
  for (std::size_t i = 0; i < errors.size(); ++i) a[i] = std::abs(errors[i]);
  std::sort(a.begin(), a.end());
  const std::size_t n = a.size();
  return n % 2 == 1 ? a[n / 2] : 0.5 * (a[n / 2 - 1] + a[n / 2]);
}

/// Empirical CRPS: mean_g |X_g − y| − ½ · mean over all ordered pairs (g,h)
/// of |X_g − X_h|.
inline double crps_empirical(const std::vector<double>& samples, double observed) {
  const std::size_t n = samples.size();
  if (n < 2) throw TooFewSamples("crps needs at least 2 samples");
  double term1 = 0.0;
  for (const double x : samples) term1 += std::abs(x - observed);
  term1 /= static_cast<double>(n);

  // Σ_{g,h} |X_g − X_h| via the sorted-sample identity Σ (2i+1−n)·x_(i), O(n log n)
  std::vector<double> s(samples);
  std::sort(s.begin(), s.end());
  double pair_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    pair_sum += (2.0 * static_cast<double>(i) + 1.0 - static_cast<double>(n)) * s[i];
  }
  const double term2 = pair_sum / (static_cast<double>(n) * static_cast<double>(n));
  return term1 - term2;
}

struct Interval {
  bool covered = false;
  double lower = 0.0;
  double upper = 0.0;

  double width() const { return upper - lower; }
};

/// Equal-tailed credible interval from empirical quantiles (linear
/// interpolation between order statistics); covered iff the observation lies
/// in the closed interval.
inline Interval ci_cover_width(const std::vector<double>& samples, double observed,
                               double level = 0.95) {
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("interval level must be in (0,1)");
  const auto needed = static_cast<std::size_t>(std::ceil(2.0 / (1.0 - level)));
  if (samples.size() < needed) {
    throw TooFewSamples("need >= " + std::to_string(needed) + " samples for a " +
                        std::to_string(level) + " interval");
  }
  std::vector<double> s(samples);
  std::sort(s.begin(), s.end());
  Interval out;
  out.lower = quantile_sorted(s, 0.5 * (1.0 - level));
  out.upper = quantile_sorted(s, 1.0 - 0.5 * (1.0 - level));
  out.covered = observed >= out.lower && observed <= out.upper;
  return out;
}

/// One scored target (a prediction unit or a pooled set): error summaries
/// over replicates plus interval diagnostics.
struct TargetScore {
  std::string target;
  double rmspe = 0.0;
  double mpe = 0.0;
  double crps = 0.0;
  double ci_cover = 0.0;
  double ci_width = 0.0;
};

struct ScoreReport {
  std::vector<TargetScore> targets;
  TargetScore average;
  int n_targets = 0;
  int n_replicates = 0;

  void finalize() {
    n_targets = static_cast<int>(targets.size());
    average = TargetScore{"average"};
    if (targets.empty()) return;
    for (const auto& t : targets) {
      average.rmspe += t.rmspe;
      average.mpe += t.mpe;
      average.crps += t.crps;
      average.ci_cover += t.ci_cover;
      average.ci_width += t.ci_width;
    }
    const double n = static_cast<double>(targets.size());
    average.rmspe /= n;
    average.mpe /= n;
    average.crps /= n;
    average.ci_cover /= n;
    average.ci_width /= n;
  }
};

}  // namespace cosgp::metrics
