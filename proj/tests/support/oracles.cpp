#include "oracles.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace rulsurv::oracle {

namespace {

// 5-point Gauss-Legendre rule on [-1, 1].
constexpr std::array<double, 5> kNodes{-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                                       0.9061798459386640};
constexpr std::array<double, 5> kWeights{0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                                         0.4786286704993665, 0.2369268850561891};

struct Polyline {
  std::size_t dim;
  std::size_t segments;
  const std::vector<double>* coords;

  double x(std::size_t point, std::size_t a) const { return (*coords)[point * dim + a]; }
  double slope(std::size_t seg, std::size_t a) const { return x(seg + 1, a) - x(seg, a); }
  // Coordinate a at parameter s in [0, segments].
  double at(double s, std::size_t a) const {
    auto m = static_cast<std::size_t>(std::floor(s));
    if (m >= segments) m = segments - 1;
    const double u = s - static_cast<double>(m);
    return x(m, a) + u * slope(m, a);
  }
};

// Iterated integral of `word` over [0, s]; the innermost level is the exact
// increment, every outer level is integrated by quadrature.
double iterated(const Polyline& p, const std::vector<std::size_t>& word, std::size_t len, double s) {
  if (len == 1) return p.at(s, word[0]) - p.x(0, word[0]);
  const std::size_t last = word[len - 1];
  double total = 0.0;
  for (std::size_t m = 0; m < p.segments; ++m) {
    const double lo = static_cast<double>(m);
    if (lo >= s) break;
    const double hi = std::min(s, lo + 1.0);
    const double half = 0.5 * (hi - lo);
    const double mid = 0.5 * (hi + lo);
    double seg = 0.0;
    for (std::size_t q = 0; q < kNodes.size(); ++q) {
      seg += kWeights[q] * iterated(p, word, len - 1, mid + half * kNodes[q]);
    }
    total += half * seg * p.slope(m, last);
  }
  return total;
}

double clamp_weight(double g, double cap) {
  if (g <= 0.0) return cap;
  return std::min(1.0 / g, cap);
}

double km_at(const std::vector<KmStep>& km, double t) {
  double s = 1.0;
  for (const auto& step : km) {
    if (step.time <= t) s = step.survival;
  }
  return s;
}

struct AucAt {
  bool valid;
  double value;
};

AucAt auc_at(const SurvivalDataset& test, std::span<const SurvivalCurve> curves, const std::vector<KmStep>& g,
             double t, double cap) {
  double num = 0.0;
  double den_cases = 0.0;
  double controls = 0.0;
  for (std::size_t j = 0; j < test.size(); ++j) {
    if (test[j].tau > t) controls += 1.0;
  }
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (!(test[i].event && test[i].tau <= t)) continue;
    const double w = clamp_weight(km_left(g, test[i].tau), cap);
    den_cases += w;
    const double si = step_value(curves[i], t);
    for (std::size_t j = 0; j < test.size(); ++j) {
      if (!(test[j].tau > t)) continue;
      const double sj = step_value(curves[j], t);
      if (si < sj) {
        num += w;
      } else if (si == sj) {
        num += 0.5 * w;
      }
    }
  }
  if (controls == 0.0 || den_cases == 0.0) return {false, 0.0};
  return {true, num / (den_cases * controls)};
}

double brier_at(const SurvivalDataset& test, std::span<const SurvivalCurve> curves, const std::vector<KmStep>& g,
                double t, double cap) {
  double acc = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const double s = step_value(curves[i], t);
    if (test[i].tau > t) {
      acc += (1.0 - s) * (1.0 - s) * clamp_weight(km_left(g, t), cap);
    } else if (test[i].event) {
      acc += s * s * clamp_weight(km_left(g, test[i].tau), cap);
    }
  }
  return acc / static_cast<double>(test.size());
}

}  // namespace

std::vector<double> quadrature_signature(const AugmentedPath& path, int depth) {
  if (depth < 1 || path.size() < 2) throw std::invalid_argument("quadrature_signature: bad input");
  const Polyline p{path.dim(), path.size() - 1, &path.coordinates()};
  const double end = static_cast<double>(p.segments);
  std::vector<double> out;
  for (int level = 1; level <= depth; ++level) {
    std::vector<std::size_t> word(static_cast<std::size_t>(level), 0);
    while (true) {
      out.push_back(iterated(p, word, word.size(), end));
      // Next multi-index in lexicographic order.
      std::size_t k = word.size();
      while (k > 0 && word[k - 1] + 1 == p.dim) {
        word[k - 1] = 0;
        --k;
      }
      if (k == 0) break;
      ++word[k - 1];
    }
  }
  return out;
}

std::vector<KmStep> brute_km(const SurvivalDataset& data, bool censoring) {
  std::vector<double> times = data.durations();
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  std::vector<KmStep> out;
  double s = 1.0;
  for (double u : times) {
    double d = 0.0;
    double n = 0.0;
    for (const auto& r : data.records()) {
      if (censoring) {
        if (r.tau == u && !r.event) d += 1.0;
        if (r.tau > u || (r.tau == u && !r.event)) n += 1.0;
      } else {
        if (r.tau == u && r.event) d += 1.0;
        if (r.tau >= u) n += 1.0;
      }
    }
    if (d == 0.0) continue;
    s *= (n - d) / n;
    out.push_back({u, s});
  }
  return out;
}

double km_left(const std::vector<KmStep>& km, double t) {
  double s = 1.0;
  for (const auto& step : km) {
    if (step.time < t) s = step.survival;
  }
  return s;
}

double step_value(const SurvivalCurve& curve, double t) {
  double s = 1.0;
  for (std::size_t k = 0; k < curve.times.size(); ++k) {
    if (curve.times[k] <= t) s = curve.probabilities[k];
  }
  return s;
}

double brute_c_index(const SurvivalDataset& test, std::span<const SurvivalCurve> curves) {
  double sum = 0.0;
  double events = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (!test[i].event) continue;
    double good = 0.0;
    double pairs = 0.0;
    for (std::size_t j = 0; j < test.size(); ++j) {
      if (!(test[i].tau < test[j].tau)) continue;
      pairs += 1.0;
      const double si = step_value(curves[i], test[i].tau);
      const double sj = step_value(curves[j], test[i].tau);
      if (si < sj) good += 1.0;
      if (si == sj) good += 0.5;
    }
    if (pairs == 0.0) continue;
    sum += good / pairs;
    events += 1.0;
  }
  if (events == 0.0) throw std::domain_error("brute_c_index: no comparable pairs");
  return sum / events;
}

double brute_t_auc(const SurvivalDataset& test, std::span<const SurvivalCurve> curves,
                   const std::vector<double>& times, double cap) {
  const auto g = brute_km(test, true);
  const auto f = brute_km(test, false);
  double acc = 0.0;
  double norm = 0.0;
  double uniform_acc = 0.0;
  double uniform_norm = 0.0;
  for (std::size_t k = 0; k < times.size(); ++k) {
    const double before = k == 0 ? 1.0 : km_at(f, times[k - 1]);
    const double w = before - km_at(f, times[k]);
    const auto a = auc_at(test, curves, g, times[k], cap);
    if (!a.valid) continue;
    acc += w * a.value;
    norm += w;
    uniform_acc += a.value;
    uniform_norm += 1.0;
  }
  if (uniform_norm == 0.0) throw std::domain_error("brute_t_auc: no valid time");
  return norm > 0.0 ? acc / norm : uniform_acc / uniform_norm;
}

double brute_t_auc_uniform(const SurvivalDataset& test, std::span<const SurvivalCurve> curves,
                           const std::vector<double>& times, double cap) {
  const auto g = brute_km(test, true);
  double acc = 0.0;
  double norm = 0.0;
  for (double t : times) {
    const auto a = auc_at(test, curves, g, t, cap);
    if (!a.valid) continue;
    acc += a.value;
    norm += 1.0;
  }
  if (norm == 0.0) throw std::domain_error("brute_t_auc_uniform: no valid time");
  return acc / norm;
}

double brute_ibs(const SurvivalDataset& test, std::span<const SurvivalCurve> curves,
                 const std::vector<double>& times, double cap) {
  const auto g = brute_km(test, true);
  double area = 0.0;
  for (std::size_t k = 1; k < times.size(); ++k) {
    const double a = brier_at(test, curves, g, times[k - 1], cap);
    const double b = brier_at(test, curves, g, times[k], cap);
    area += (times[k] - times[k - 1]) * (a + b) / 2.0;
  }
  return area / (times.back() - times.front());
}

double classic_brier_average(const SurvivalDataset& test, std::span<const SurvivalCurve> curves,
                             const std::vector<double>& times) {
  const auto at = [&](double t) {
    double acc = 0.0;
    for (std::size_t i = 0; i < test.size(); ++i) {
      const double alive = test[i].tau > t ? 1.0 : 0.0;
      const double e = alive - step_value(curves[i], t);
      acc += e * e;
    }
    return acc / static_cast<double>(test.size());
  };
  double area = 0.0;
  for (std::size_t k = 1; k < times.size(); ++k) {
    area += (times[k] - times[k - 1]) * (at(times[k - 1]) + at(times[k])) / 2.0;
  }
  return area / (times.back() - times.front());
}

}  // namespace rulsurv::oracle
