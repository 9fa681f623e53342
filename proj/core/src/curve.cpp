#include "rulsurv/curve.hpp"

#include <algorithm>
#include <cmath>

#include "rulsurv/error.hpp"

namespace rulsurv {

double SurvivalCurve::at(double t) const {
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 1.0;
  return probabilities[static_cast<std::size_t>(it - times.begin()) - 1];
}

void SurvivalCurve::validate() const {
  if (times.size() != probabilities.size()) throw Error(ErrorCode::InvalidArgument, "curve arrays differ in length");
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double p = probabilities[i];
    if (!std::isfinite(p) || p < 0.0 || p > 1.0) throw Error(ErrorCode::InvalidArgument, "curve value outside [0,1]");
    if (i > 0 && !(times[i] > times[i - 1])) throw Error(ErrorCode::InvalidArgument, "curve times must increase");
    if (i > 0 && p > probabilities[i - 1]) throw Error(ErrorCode::InvalidArgument, "curve must be non-increasing");
  }
}

double trapezoid_risk(const SurvivalCurve& curve, double horizon) {
  if (!(horizon > 0.0)) throw Error(ErrorCode::InvalidArgument, "risk horizon must be positive");
  const auto& t = curve.times;
  const auto& s = curve.probabilities;
  const auto value = [&](double x) {
    // Linear between samples, 1 at the origin, held after the last sample.
    const auto it = std::upper_bound(t.begin(), t.end(), x);
    const auto k = static_cast<std::size_t>(it - t.begin());
    if (k == t.size()) return t.empty() ? 1.0 : s.back();
    const double x1 = t[k];
    const double y1 = s[k];
    double x0 = 0.0;
    double y0 = 1.0;
    if (k > 0) {
      x0 = t[k - 1];
      y0 = s[k - 1];
    }
    if (x1 <= x0) return y1;
    return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
  };
  std::vector<double> knots{0.0};
  for (double x : t) {
    if (x > 0.0 && x < horizon) knots.push_back(x);
  }
  knots.push_back(horizon);
  double area = 0.0;
  double prev_x = 0.0;
  double prev_y = 1.0 - (!t.empty() && t.front() <= 0.0 ? curve.at(0.0) : 1.0);
  for (std::size_t i = 1; i < knots.size(); ++i) {
    const double y = 1.0 - value(knots[i]);
    area += 0.5 * (prev_y + y) * (knots[i] - prev_x);
    prev_x = knots[i];
    prev_y = y;
  }
  return area;
}

}  // namespace rulsurv
