#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rulsurv/curve.hpp"
#include "rulsurv/survdata.hpp"

namespace rulsurv {

/// Mean over events i of the fraction of comparable j (T_i < T_j) with
/// S(T_i | x_i) < S(T_i | x_j); prediction ties count 0.5.
double c_index(const SurvivalDataset& test, std::span<const SurvivalCurve> curves);

enum class AucWeighting { EventDensity, Uniform };

struct AucPoint {
  double time;
  double auc;
  double weight;
};

/// Cumulative/dynamic AUC at each grid time: cases are events with
/// T_i <= t weighted by 1/G(T_i-), controls are records with T_j > t.
/// Grid times without cases or controls are skipped.
std::vector<AucPoint> t_auc_curve(const SurvivalDataset& test, std::span<const SurvivalCurve> curves,
                                  const TimeGrid& grid, const KmCurve& km_censor,
                                  double ipcw_cap = kDefaultIpcwCap);

/// Weighted mean of t_auc_curve. EventDensity weights each time by the
/// drop of the test-set failure KM since the previous grid time; if the
/// valid times carry no drop, uniform weights are used.
double t_auc(const SurvivalDataset& test, std::span<const SurvivalCurve> curves, const TimeGrid& grid,
             const KmCurve& km_censor, AucWeighting weighting = AucWeighting::EventDensity,
             double ipcw_cap = kDefaultIpcwCap);

/// IPCW Brier score at time t.
double brier_score(const SurvivalDataset& test, std::span<const SurvivalCurve> curves, double t,
                   const KmCurve& km_censor, double ipcw_cap = kDefaultIpcwCap);

/// Trapezoidal time-average of the Brier score over the grid, divided by
/// the grid span.
double ibs(const SurvivalDataset& test, std::span<const SurvivalCurve> curves, const TimeGrid& grid,
           const KmCurve& km_censor, double ipcw_cap = kDefaultIpcwCap);

/// `points` equidistant times between the lo and hi quantiles (linear
/// interpolation) of the test durations.
TimeGrid default_eval_grid(const SurvivalDataset& test, std::size_t points = 50, double lo_quantile = 0.05,
                           double hi_quantile = 0.95);

/// Union of grid times and test durations, sorted; the sample times for
/// curves passed to the metrics.
std::vector<double> evaluation_times(const SurvivalDataset& test, const TimeGrid& grid);

struct MetricsReport {
  double t_auc = 0.0;
  double c_index = 0.0;
  double ibs = 0.0;
  TimeGrid eval_grid;
  std::size_t n_test = 0;
  std::vector<std::string> notes;
};

/// All three metrics with the censoring KM estimated on `test`.
MetricsReport evaluate(const SurvivalDataset& test, std::span<const SurvivalCurve> curves, const TimeGrid& grid,
                       AucWeighting weighting = AucWeighting::EventDensity, double ipcw_cap = kDefaultIpcwCap);

/// key=value lines.
void write_report(std::ostream& os, const MetricsReport& report);

}  // namespace rulsurv
