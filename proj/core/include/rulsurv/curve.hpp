#pragma once

#include <vector>

namespace rulsurv {

/// Predicted Pr(T > t) sampled at increasing times.
struct SurvivalCurve {
  std::vector<double> times;
  std::vector<double> probabilities;

  /// Value at the last sample time <= t; 1 before the first sample.
  double at(double t) const;
  /// Throws InvalidArgument unless sizes match, times increase, and the
  /// probabilities are finite, inside [0,1], and non-increasing.
  void validate() const;

  friend bool operator==(const SurvivalCurve&, const SurvivalCurve&) = default;
};

/// Trapezoidal integral of 1 - S over [0, horizon], with S(0) = 1 and
/// S linearly interpolated between samples and held after the last one.
double trapezoid_risk(const SurvivalCurve& curve, double horizon);

}  // namespace rulsurv
