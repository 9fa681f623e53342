#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rulsurv {

enum class DurationUnit { Cycles, Seconds, Unitless };

const char* to_string(DurationUnit unit) noexcept;
DurationUnit parse_duration_unit(std::string_view text);

struct SurvivalRecord {
  std::string sample_id;
  std::vector<double> x;
  double tau = 0.0;  // observed duration, min(T, C)
  bool event = false;  // 1(T <= C)

  friend bool operator==(const SurvivalRecord&, const SurvivalRecord&) = default;
};

/// Non-empty set of records sharing one feature dimension and duration unit.
class SurvivalDataset {
 public:
  SurvivalDataset(std::vector<SurvivalRecord> records, DurationUnit unit,
                  std::optional<int> signature_depth = std::nullopt,
                  std::map<std::string, std::string> group_labels = {});

  const std::vector<SurvivalRecord>& records() const noexcept { return records_; }
  const SurvivalRecord& operator[](std::size_t i) const { return records_[i]; }
  std::size_t size() const noexcept { return records_.size(); }
  std::size_t feature_dim() const noexcept { return feature_dim_; }
  DurationUnit unit() const noexcept { return unit_; }
  std::optional<int> signature_depth() const noexcept { return depth_; }
  const std::map<std::string, std::string>& group_labels() const noexcept { return groups_; }

  std::vector<double> durations() const;
  std::size_t event_count() const;

  /// Records at `indices`, in that order; metadata carried over.
  SurvivalDataset subset(std::span<const std::size_t> indices) const;
  /// Same records with features replaced (rows must match size()).
  SurvivalDataset with_features(std::vector<std::vector<double>> features) const;

 private:
  std::vector<SurvivalRecord> records_;
  DurationUnit unit_;
  std::size_t feature_dim_ = 0;
  std::optional<int> depth_;
  std::map<std::string, std::string> groups_;
};

struct SplitFractions {
  double train = 0.8;
  double val = 0.05;
  double test = 0.15;
};

struct DatasetSplit {
  SurvivalDataset train;
  SurvivalDataset val;
  SurvivalDataset test;
};

/// Seeded split stratified on the event indicator. Split sizes are rounded
/// from N x fraction, and each split receives round(E x size / N) events,
/// the test split taking the remainder. Within each split records keep
/// their dataset order.
DatasetSplit split(const SurvivalDataset& dataset, const SplitFractions& fractions, std::uint64_t seed);

/// Indices j with tau_j >= t.
std::vector<std::size_t> risk_set(const SurvivalDataset& dataset, double t);

/// Right-continuous product-limit step function, starting at 1.
class KmCurve {
 public:
  KmCurve() = default;
  KmCurve(std::vector<double> event_times, std::vector<double> survival);

  const std::vector<double>& event_times() const noexcept { return times_; }
  const std::vector<double>& survival() const noexcept { return survival_; }

  /// S(t): product over event times <= t.
  double at(double t) const;
  /// S(t-): product over event times < t.
  double before(double t) const;

 private:
  std::vector<double> times_;
  std::vector<double> survival_;
};

enum class KmTarget { Failure, Censoring };

/// Product-limit estimate of the failure survival function, or with
/// KmTarget::Censoring of the censoring survival function. At tied times
/// events precede censorings: a censoring at t counts as at risk for an
/// event at t, an event at t is not at risk for a censoring at t.
KmCurve km_estimate(const SurvivalDataset& dataset, KmTarget target = KmTarget::Failure);

inline constexpr double kDefaultIpcwCap = 100.0;

/// 1 / G(t-), clamped at `cap`.
double ipcw_weight(const KmCurve& km_censor, double t, double cap = kDefaultIpcwCap);
bool ipcw_clamped(const KmCurve& km_censor, double t, double cap = kDefaultIpcwCap);

/// Strictly increasing cut points t_1 < ... < t_K.
class TimeGrid {
 public:
  explicit TimeGrid(std::vector<double> cut_points);

  const std::vector<double>& points() const noexcept { return points_; }
  std::size_t size() const noexcept { return points_.size(); }
  double front() const { return points_.front(); }
  double back() const { return points_.back(); }
  double operator[](std::size_t k) const { return points_[k]; }

  /// First k with t <= t_k, or size() when t lies beyond the last point.
  std::size_t bin(double t) const;

 private:
  std::vector<double> points_;
};

/// K equidistant points from min to max training duration, inclusive.
TimeGrid make_grid(const SurvivalDataset& train, std::size_t k);

/// Exponential proportional-hazards data: x ~ N(0, I), T ~ Exp(exp(beta.x)),
/// independent exponential censoring with its rate calibrated on the drawn
/// features so the expected censored fraction equals censor_rate.
SurvivalDataset generate_synthetic(std::size_t n, std::size_t feature_dim, std::span<const double> true_beta,
                                   double censor_rate, std::uint64_t seed);

/// Column-wise z-scoring; statistics come from the dataset passed to fit().
class Standardizer {
 public:
  Standardizer() = default;
  Standardizer(std::vector<double> mean, std::vector<double> scale);

  static Standardizer fit(const SurvivalDataset& train);

  SurvivalDataset apply(const SurvivalDataset& dataset) const;
  std::vector<double> apply(std::span<const double> x) const;

  const std::vector<double>& mean() const noexcept { return mean_; }
  const std::vector<double>& scale() const noexcept { return scale_; }

  void save(std::ostream& os) const;
  static Standardizer load(std::istream& is);

 private:
  std::vector<double> mean_;
  std::vector<double> scale_;
};

/// Delimited snapshot: metadata lines `# key=value` (duration_unit,
/// feature_dim, depth), then a `sample_id,tau,zeta,x_1..x_d` table.
void write_snapshot(std::ostream& os, const SurvivalDataset& dataset);
SurvivalDataset read_snapshot(std::istream& is);

}  // namespace rulsurv
