#pragma once

#include <span>
#include <vector>

namespace mecperf::sim {

/// Linear-interpolation quantile (Hyndman-Fan type 7) of unsorted values.
/// NaN for an empty input.
double quantile(std::vector<double> values, double q);

struct Interval {
  double mean = 0.0;
  double half_width = 0.0;
  double low() const { return mean - half_width; }
  double high() const { return mean + half_width; }
};

/// Student-t confidence interval for the mean of independent replication
/// values, n - 1 degrees of freedom. A single value gets zero width.
Interval confidence_interval(std::span<const double> values, double level = 0.95);

}  // namespace mecperf::sim
