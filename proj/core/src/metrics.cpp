#include "rulsurv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "rulsurv/error.hpp"
#include "rulsurv/text.hpp"

namespace rulsurv {

namespace {

void check_curves(const SurvivalDataset& test, std::span<const SurvivalCurve> curves) {
  if (curves.size() != test.size()) {
    throw Error(ErrorCode::ShapeMismatch, "expected one survival curve per test record");
  }
}

double pair_credit(double case_s, double control_s) {
  if (case_s < control_s) return 1.0;
  if (case_s == control_s) return 0.5;
  return 0.0;
}

struct AucSummary {
  double value;
  bool fell_back;
};

AucSummary reduce_auc(const std::vector<AucPoint>& points, AucWeighting weighting) {
  double total = 0.0;
  for (const auto& p : points) total += p.weight;
  const bool uniform = weighting == AucWeighting::Uniform || !(total > 0.0);
  double acc = 0.0;
  double norm = 0.0;
  for (const auto& p : points) {
    const double w = uniform ? 1.0 : p.weight;
    acc += w * p.auc;
    norm += w;
  }
  return {acc / norm, weighting == AucWeighting::EventDensity && uniform};
}

}  // namespace

double c_index(const SurvivalDataset& test, std::span<const SurvivalCurve> curves) {
  check_curves(test, curves);
  double sum = 0.0;
  std::size_t events = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (!test[i].event) continue;
    const double ti = test[i].tau;
    const double si = curves[i].at(ti);
    double credit = 0.0;
    std::size_t comparable = 0;
    for (std::size_t j = 0; j < test.size(); ++j) {
      if (!(ti < test[j].tau)) continue;
      ++comparable;
      credit += pair_credit(si, curves[j].at(ti));
    }
    if (comparable == 0) continue;
    sum += credit / static_cast<double>(comparable);
    ++events;
  }
  if (events == 0) throw Error(ErrorCode::NoComparablePairs, "no comparable pairs in the test set");
  return sum / static_cast<double>(events);
}

std::vector<AucPoint> t_auc_curve(const SurvivalDataset& test, std::span<const SurvivalCurve> curves,
                                  const TimeGrid& grid, const KmCurve& km_censor, double ipcw_cap) {
  check_curves(test, curves);
  const KmCurve km = km_estimate(test, KmTarget::Failure);
  std::vector<AucPoint> out;
  double prev_s = 1.0;
  for (double t : grid.points()) {
    const double s_now = km.at(t);
    const double drop = prev_s - s_now;
    prev_s = s_now;
    double num = 0.0;
    double case_weight = 0.0;
    std::size_t controls = 0;
    for (std::size_t j = 0; j < test.size(); ++j) controls += test[j].tau > t ? 1 : 0;
    if (controls == 0) continue;
    for (std::size_t i = 0; i < test.size(); ++i) {
      if (!test[i].event || test[i].tau > t) continue;
      const double w = ipcw_weight(km_censor, test[i].tau, ipcw_cap);
      const double si = curves[i].at(t);
      case_weight += w;
      for (std::size_t j = 0; j < test.size(); ++j) {
        if (test[j].tau > t) num += w * pair_credit(si, curves[j].at(t));
      }
    }
    if (!(case_weight > 0.0)) continue;
    out.push_back({t, num / (case_weight * static_cast<double>(controls)), drop});
  }
  return out;
}

double t_auc(const SurvivalDataset& test, std::span<const SurvivalCurve> curves, const TimeGrid& grid,
             const KmCurve& km_censor, AucWeighting weighting, double ipcw_cap) {
  const auto points = t_auc_curve(test, curves, grid, km_censor, ipcw_cap);
  if (points.empty()) throw Error(ErrorCode::DegenerateTime, "no grid time has both cases and controls");
  return reduce_auc(points, weighting).value;
}

double brier_score(const SurvivalDataset& test, std::span<const SurvivalCurve> curves, double t,
                   const KmCurve& km_censor, double ipcw_cap) {
  check_curves(test, curves);
  double acc = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const double s = curves[i].at(t);
    if (test[i].tau <= t) {
      if (test[i].event) acc += s * s * ipcw_weight(km_censor, test[i].tau, ipcw_cap);
    } else {
      acc += (1.0 - s) * (1.0 - s) * ipcw_weight(km_censor, t, ipcw_cap);
    }
  }
  return acc / static_cast<double>(test.size());
}

double ibs(const SurvivalDataset& test, std::span<const SurvivalCurve> curves, const TimeGrid& grid,
           const KmCurve& km_censor, double ipcw_cap) {
  check_curves(test, curves);
  bool any = false;
  for (const auto& r : test.records()) any = any || r.event || r.tau > grid.front();
  if (!any) throw Error(ErrorCode::DegenerateTime, "no test record contributes on the evaluation grid");
  const auto& pts = grid.points();
  double area = 0.0;
  double prev = brier_score(test, curves, pts.front(), km_censor, ipcw_cap);
  for (std::size_t k = 1; k < pts.size(); ++k) {
    const double cur = brier_score(test, curves, pts[k], km_censor, ipcw_cap);
    area += 0.5 * (prev + cur) * (pts[k] - pts[k - 1]);
    prev = cur;
  }
  return area / (pts.back() - pts.front());
}

TimeGrid default_eval_grid(const SurvivalDataset& test, std::size_t points, double lo_quantile, double hi_quantile) {
  if (points < 2) throw Error(ErrorCode::InvalidArgument, "evaluation grid needs at least two points");
  if (!(lo_quantile >= 0.0 && lo_quantile < hi_quantile && hi_quantile <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "evaluation quantiles must satisfy 0 <= lo < hi <= 1");
  }
  auto d = test.durations();
  std::sort(d.begin(), d.end());
  const auto quantile = [&d](double q) {
    const double h = q * static_cast<double>(d.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, d.size() - 1);
    return d[lo] + (h - static_cast<double>(lo)) * (d[hi] - d[lo]);
  };
  const double a = quantile(lo_quantile);
  const double b = quantile(hi_quantile);
  if (!(b > a)) throw Error(ErrorCode::DegenerateTime, "test durations collapse to a single evaluation time");
  std::vector<double> g(points);
  for (std::size_t k = 0; k < points; ++k) g[k] = a + (b - a) * static_cast<double>(k) / static_cast<double>(points - 1);
  g.back() = b;
  return TimeGrid(std::move(g));
}

std::vector<double> evaluation_times(const SurvivalDataset& test, const TimeGrid& grid) {
  std::vector<double> t = test.durations();
  t.insert(t.end(), grid.points().begin(), grid.points().end());
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  return t;
}

MetricsReport evaluate(const SurvivalDataset& test, std::span<const SurvivalCurve> curves, const TimeGrid& grid,
                       AucWeighting weighting, double ipcw_cap) {
  const KmCurve km_censor = km_estimate(test, KmTarget::Censoring);
  MetricsReport report{0.0, 0.0, 0.0, grid, test.size(), {}};
  report.c_index = c_index(test, curves);
  const auto points = t_auc_curve(test, curves, grid, km_censor, ipcw_cap);
  if (points.empty()) throw Error(ErrorCode::DegenerateTime, "no grid time has both cases and controls");
  const auto auc = reduce_auc(points, weighting);
  report.t_auc = auc.value;
  report.ibs = ibs(test, curves, grid, km_censor, ipcw_cap);

  if (points.size() < grid.size()) {
    report.notes.push_back("t_auc skipped " + std::to_string(grid.size() - points.size()) +
                           " grid times without cases or controls");
  }
  if (auc.fell_back) report.notes.push_back("t_auc used uniform weights: no failure-KM drop on the valid times");
  std::size_t clamped_records = 0;
  for (const auto& r : test.records()) {
    if (r.event && ipcw_clamped(km_censor, r.tau, ipcw_cap)) ++clamped_records;
  }
  std::size_t clamped_times = 0;
  for (double t : grid.points()) clamped_times += ipcw_clamped(km_censor, t, ipcw_cap) ? 1 : 0;
  if (clamped_records + clamped_times > 0) {
    report.notes.push_back("ipcw weight clamped at " + format_double(ipcw_cap) + " for " +
                           std::to_string(clamped_records) + " event records and " + std::to_string(clamped_times) +
                           " grid times");
  }
  return report;
}

void write_report(std::ostream& os, const MetricsReport& report) {
  os << "t_auc=" << format_double(report.t_auc) << '\n';
  os << "c_index=" << format_double(report.c_index) << '\n';
  os << "ibs=" << format_double(report.ibs) << '\n';
  os << "n_test=" << report.n_test << '\n';
  os << "eval_grid=" << format_double(report.eval_grid.front()) << ".." << format_double(report.eval_grid.back())
     << " (" << report.eval_grid.size() << " points)\n";
  for (const auto& note : report.notes) os << "note=" << note << '\n';
}

}  // namespace rulsurv
