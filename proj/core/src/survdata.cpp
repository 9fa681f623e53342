#include "rulsurv/survdata.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "rulsurv/error.hpp"
#include "rulsurv/rng.hpp"
#include "rulsurv/text.hpp"

namespace rulsurv {

const char* to_string(DurationUnit unit) noexcept {
  switch (unit) {
    case DurationUnit::Cycles: return "cycles";
    case DurationUnit::Seconds: return "seconds";
    case DurationUnit::Unitless: return "unitless";
  }
  return "unitless";
}

DurationUnit parse_duration_unit(std::string_view text) {
  if (text == "cycles") return DurationUnit::Cycles;
  if (text == "seconds") return DurationUnit::Seconds;
  if (text == "unitless") return DurationUnit::Unitless;
  throw Error(ErrorCode::FormatError, "unknown duration unit '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// SurvivalDataset

SurvivalDataset::SurvivalDataset(std::vector<SurvivalRecord> records, DurationUnit unit,
                                 std::optional<int> signature_depth,
                                 std::map<std::string, std::string> group_labels)
    : records_(std::move(records)), unit_(unit), depth_(signature_depth), groups_(std::move(group_labels)) {
  if (records_.empty()) throw Error(ErrorCode::InvalidRecord, "dataset needs at least one record");
  feature_dim_ = records_.front().x.size();
  for (const auto& r : records_) {
    if (r.x.size() != feature_dim_) {
      throw Error(ErrorCode::InvalidRecord, "record '" + r.sample_id + "' has feature dimension " +
                                                std::to_string(r.x.size()) + ", expected " +
                                                std::to_string(feature_dim_));
    }
    if (!(r.tau > 0.0) || !std::isfinite(r.tau)) {
      throw Error(ErrorCode::InvalidRecord, "record '" + r.sample_id + "' has non-positive duration");
    }
    if (!std::all_of(r.x.begin(), r.x.end(), [](double v) { return std::isfinite(v); })) {
      throw Error(ErrorCode::InvalidRecord, "record '" + r.sample_id + "' has non-finite features");
    }
  }
}

std::vector<double> SurvivalDataset::durations() const {
  std::vector<double> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.tau);
  return out;
}

std::size_t SurvivalDataset::event_count() const {
  return static_cast<std::size_t>(
      std::count_if(records_.begin(), records_.end(), [](const SurvivalRecord& r) { return r.event; }));
}

SurvivalDataset SurvivalDataset::subset(std::span<const std::size_t> indices) const {
  std::vector<SurvivalRecord> picked;
  picked.reserve(indices.size());
  for (std::size_t i : indices) picked.push_back(records_.at(i));
  return SurvivalDataset(std::move(picked), unit_, depth_, groups_);
}

SurvivalDataset SurvivalDataset::with_features(std::vector<std::vector<double>> features) const {
  if (features.size() != records_.size()) {
    throw Error(ErrorCode::ShapeMismatch, "feature rows do not match record count");
  }
  auto copy = records_;
  for (std::size_t i = 0; i < copy.size(); ++i) copy[i].x = std::move(features[i]);
  return SurvivalDataset(std::move(copy), unit_, depth_, groups_);
}

// ---------------------------------------------------------------------------
// split

DatasetSplit split(const SurvivalDataset& dataset, const SplitFractions& f, std::uint64_t seed) {
  if (!(f.train > 0.0 && f.val > 0.0 && f.test > 0.0) || std::abs(f.train + f.val + f.test - 1.0) > 1e-9) {
    throw Error(ErrorCode::InvalidArgument, "split fractions must be positive and sum to 1");
  }
  std::vector<std::size_t> events;
  std::vector<std::size_t> censored;
  for (std::size_t i = 0; i < dataset.size(); ++i) (dataset[i].event ? events : censored).push_back(i);

  const auto n = static_cast<long long>(dataset.size());
  const auto e = static_cast<long long>(events.size());
  const long long n_train = std::llround(static_cast<double>(n) * f.train);
  const long long n_val = std::llround(static_cast<double>(n) * f.val);
  const long long n_test = n - n_train - n_val;
  if (n_train <= 0 || n_val <= 0 || n_test <= 0) {
    throw Error(ErrorCode::TooFewRecords, std::to_string(n) + " records cannot populate all three splits");
  }
  long long e_train = std::llround(static_cast<double>(e * n_train) / static_cast<double>(n));
  long long e_val = std::llround(static_cast<double>(e * n_val) / static_cast<double>(n));
  long long e_test = e - e_train - e_val;
  // Rounding can leave the test split with a negative or oversized event share.
  while (e_test < 0) {
    --e_train;
    ++e_test;
  }
  while (e_test > n_test) {
    ++e_train;
    --e_test;
  }
  const std::array<long long, 3> sizes{n_train, n_val, n_test};
  const std::array<long long, 3> event_alloc{e_train, e_val, e_test};
  std::array<long long, 3> censor_alloc{};
  for (int s = 0; s < 3; ++s) censor_alloc[s] = sizes[s] - event_alloc[s];

  const auto check = [](const std::array<long long, 3>& alloc, std::size_t stratum, const char* name) {
    if (stratum == 0) return;
    for (long long c : alloc) {
      if (c <= 0) {
        throw Error(ErrorCode::TooFewRecords, std::string("the ") + name + " stratum (" +
                                                  std::to_string(stratum) +
                                                  " records) cannot populate all three splits");
      }
    }
  };
  check(event_alloc, events.size(), "event");
  check(censor_alloc, censored.size(), "censored");
  if (e_train > n_train || std::any_of(censor_alloc.begin(), censor_alloc.end(), [](long long c) { return c < 0; })) {
    throw Error(ErrorCode::TooFewRecords, "stratified allocation failed");
  }

  Rng rng(seed);
  rng.shuffle(events);
  rng.shuffle(censored);

  std::array<std::vector<std::size_t>, 3> parts;
  std::size_t ei = 0;
  std::size_t ci = 0;
  for (int s = 0; s < 3; ++s) {
    for (long long k = 0; k < event_alloc[s]; ++k) parts[s].push_back(events[ei++]);
    for (long long k = 0; k < censor_alloc[s]; ++k) parts[s].push_back(censored[ci++]);
    std::sort(parts[s].begin(), parts[s].end());
  }
  return {dataset.subset(parts[0]), dataset.subset(parts[1]), dataset.subset(parts[2])};
}

std::vector<std::size_t> risk_set(const SurvivalDataset& dataset, double t) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < dataset.size(); ++j) {
    if (dataset[j].tau >= t) out.push_back(j);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Kaplan-Meier

KmCurve::KmCurve(std::vector<double> event_times, std::vector<double> survival)
    : times_(std::move(event_times)), survival_(std::move(survival)) {
  if (times_.size() != survival_.size()) throw Error(ErrorCode::InvalidArgument, "KM arrays differ in length");
}

double KmCurve::at(double t) const {
  const auto it = std::upper_bound(times_.begin(), times_.end(), t);
  if (it == times_.begin()) return 1.0;
  return survival_[static_cast<std::size_t>(it - times_.begin()) - 1];
}

double KmCurve::before(double t) const {
  const auto it = std::lower_bound(times_.begin(), times_.end(), t);
  if (it == times_.begin()) return 1.0;
  return survival_[static_cast<std::size_t>(it - times_.begin()) - 1];
}

KmCurve km_estimate(const SurvivalDataset& dataset, KmTarget target) {
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dataset[a].tau < dataset[b].tau; });

  const bool censoring = target == KmTarget::Censoring;
  std::vector<double> times;
  std::vector<double> surv;
  double s = 1.0;
  std::size_t at_risk = dataset.size();  // records with tau >= current time
  std::size_t i = 0;
  while (i < order.size()) {
    const double t = dataset[order[i]].tau;
    std::size_t failures = 0;
    std::size_t censorings = 0;
    std::size_t j = i;
    while (j < order.size() && dataset[order[j]].tau == t) {
      (dataset[order[j]].event ? failures : censorings) += 1;
      ++j;
    }
    const std::size_t d = censoring ? censorings : failures;
    if (d > 0) {
      const std::size_t n = censoring ? at_risk - failures : at_risk;
      s *= static_cast<double>(n - d) / static_cast<double>(n);
      times.push_back(t);
      surv.push_back(s);
    }
    at_risk -= j - i;
    i = j;
  }
  return KmCurve(std::move(times), std::move(surv));
}

double ipcw_weight(const KmCurve& km_censor, double t, double cap) {
  const double g = km_censor.before(t);
  if (g * cap <= 1.0) return cap;
  return 1.0 / g;
}

bool ipcw_clamped(const KmCurve& km_censor, double t, double cap) {
  return km_censor.before(t) * cap <= 1.0;
}

// ---------------------------------------------------------------------------
// TimeGrid

TimeGrid::TimeGrid(std::vector<double> cut_points) : points_(std::move(cut_points)) {
  if (points_.size() < 2) throw Error(ErrorCode::InvalidArgument, "time grid needs at least two points");
  for (std::size_t k = 1; k < points_.size(); ++k) {
    if (!(points_[k] > points_[k - 1])) {
      throw Error(ErrorCode::InvalidArgument, "time grid must be strictly increasing");
    }
  }
}

std::size_t TimeGrid::bin(double t) const {
  return static_cast<std::size_t>(std::lower_bound(points_.begin(), points_.end(), t) - points_.begin());
}

TimeGrid make_grid(const SurvivalDataset& train, std::size_t k) {
  if (k < 2) throw Error(ErrorCode::InvalidArgument, "grid size must be at least 2");
  const auto d = train.durations();
  const auto [lo_it, hi_it] = std::minmax_element(d.begin(), d.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (!(hi > lo)) throw Error(ErrorCode::DegenerateDurations, "all training durations are equal");
  std::vector<double> pts(k);
  const double step = (hi - lo) / static_cast<double>(k - 1);
  for (std::size_t i = 0; i < k; ++i) pts[i] = lo + step * static_cast<double>(i);
  pts.back() = hi;
  return TimeGrid(std::move(pts));
}

// ---------------------------------------------------------------------------
// synthetic data

SurvivalDataset generate_synthetic(std::size_t n, std::size_t feature_dim, std::span<const double> beta,
                                   double censor_rate, std::uint64_t seed) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "synthetic dataset needs n >= 1");
  if (beta.size() != feature_dim) throw Error(ErrorCode::InvalidArgument, "beta length must equal feature_dim");
  if (!(censor_rate >= 0.0 && censor_rate < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "censor rate must lie in [0,1)");
  }
  Rng rng(seed);
  std::vector<std::vector<double>> xs(n, std::vector<double>(feature_dim));
  std::vector<double> hazard(n);
  for (std::size_t i = 0; i < n; ++i) {
    double lp = 0.0;
    for (std::size_t k = 0; k < feature_dim; ++k) {
      xs[i][k] = rng.normal();
      lp += beta[k] * xs[i][k];
    }
    hazard[i] = std::exp(lp);
  }
  std::vector<double> event_time(n);
  for (std::size_t i = 0; i < n; ++i) event_time[i] = rng.exponential(hazard[i]);

  double censor_hazard = 0.0;
  if (censor_rate > 0.0) {
    // P(C < T | x) = c / (c + h(x)); solve mean_i c/(c+h_i) = rate on log c.
    const auto expected = [&](double c) {
      double acc = 0.0;
      for (double h : hazard) acc += c / (c + h);
      return acc / static_cast<double>(n);
    };
    double lo = -40.0;
    double hi = 40.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (expected(std::exp(mid)) < censor_rate ? lo : hi) = mid;
    }
    censor_hazard = std::exp(0.5 * (lo + hi));
  }

  std::vector<SurvivalRecord> records;
  records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    SurvivalRecord r;
    std::ostringstream id;
    id << "syn_" << std::setw(4) << std::setfill('0') << i;
    r.sample_id = id.str();
    r.x = std::move(xs[i]);
    const double c = censor_hazard > 0.0 ? rng.exponential(censor_hazard) : INFINITY;
    r.event = event_time[i] <= c;
    r.tau = r.event ? event_time[i] : c;
    records.push_back(std::move(r));
  }
  return SurvivalDataset(std::move(records), DurationUnit::Unitless);
}

// ---------------------------------------------------------------------------
// Standardizer

Standardizer::Standardizer(std::vector<double> mean, std::vector<double> scale)
    : mean_(std::move(mean)), scale_(std::move(scale)) {
  if (mean_.size() != scale_.size()) throw Error(ErrorCode::InvalidArgument, "standardizer arrays differ");
}

Standardizer Standardizer::fit(const SurvivalDataset& train) {
  const std::size_t d = train.feature_dim();
  const double n = static_cast<double>(train.size());
  std::vector<double> mean(d, 0.0);
  std::vector<double> scale(d, 0.0);
  for (const auto& r : train.records()) {
    for (std::size_t k = 0; k < d; ++k) mean[k] += r.x[k];
  }
  for (double& m : mean) m /= n;
  for (const auto& r : train.records()) {
    for (std::size_t k = 0; k < d; ++k) scale[k] += (r.x[k] - mean[k]) * (r.x[k] - mean[k]);
  }
  for (double& s : scale) {
    s = std::sqrt(s / n);
    if (!(s > 1e-12)) s = 1.0;  // constant column
  }
  return Standardizer(std::move(mean), std::move(scale));
}

std::vector<double> Standardizer::apply(std::span<const double> x) const {
  if (x.size() != mean_.size()) throw Error(ErrorCode::ShapeMismatch, "feature width differs from standardizer");
  std::vector<double> out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = (x[k] - mean_[k]) / scale_[k];
  return out;
}

SurvivalDataset Standardizer::apply(const SurvivalDataset& dataset) const {
  std::vector<std::vector<double>> feats;
  feats.reserve(dataset.size());
  for (const auto& r : dataset.records()) feats.push_back(apply(r.x));
  return dataset.with_features(std::move(feats));
}

void Standardizer::save(std::ostream& os) const {
  os << "rulsurv-standardizer 1\n" << mean_.size() << '\n';
  for (std::size_t k = 0; k < mean_.size(); ++k) {
    os << format_double(mean_[k]) << ' ' << format_double(scale_[k]) << '\n';
  }
}

Standardizer Standardizer::load(std::istream& is) {
  std::string magic;
  int version = 0;
  std::size_t d = 0;
  if (!(is >> magic >> version >> d) || magic != "rulsurv-standardizer" || version != 1) {
    throw Error(ErrorCode::FormatError, "not a standardizer file");
  }
  std::vector<double> mean(d);
  std::vector<double> scale(d);
  for (std::size_t k = 0; k < d; ++k) {
    std::string m, s;
    if (!(is >> m >> s)) throw Error(ErrorCode::FormatError, "truncated standardizer file");
    auto mv = parse_double(m);
    auto sv = parse_double(s);
    if (!mv || !sv) throw Error(ErrorCode::FormatError, "bad number in standardizer file");
    mean[k] = *mv;
    scale[k] = *sv;
  }
  return Standardizer(std::move(mean), std::move(scale));
}

// ---------------------------------------------------------------------------
// snapshot

void write_snapshot(std::ostream& os, const SurvivalDataset& dataset) {
  os << "# rulsurv-dataset 1\n";
  os << "# duration_unit=" << to_string(dataset.unit()) << '\n';
  os << "# feature_dim=" << dataset.feature_dim() << '\n';
  os << "# depth=";
  if (dataset.signature_depth()) {
    os << *dataset.signature_depth();
  } else {
    os << "none";
  }
  os << '\n';
  os << "sample_id,tau,zeta";
  for (std::size_t k = 0; k < dataset.feature_dim(); ++k) os << ",x_" << (k + 1);
  os << '\n';
  for (const auto& r : dataset.records()) {
    os << r.sample_id << ',' << format_double(r.tau) << ',' << (r.event ? 1 : 0);
    for (double v : r.x) os << ',' << format_double(v);
    os << '\n';
  }
}

SurvivalDataset read_snapshot(std::istream& is) {
  std::map<std::string, std::string> meta;
  std::string line;
  std::size_t line_number = 0;
  std::vector<std::string> header;
  std::vector<SurvivalRecord> records;
  while (std::getline(is, line)) {
    ++line_number;
    const auto view = trim(line);
    if (view.empty()) continue;
    if (view.front() == '#') {
      const auto body = trim(view.substr(1));
      const auto eq = body.find('=');
      if (eq != std::string_view::npos) meta[std::string(trim(body.substr(0, eq)))] = trim(body.substr(eq + 1));
      continue;
    }
    const auto fields = split_fields(view);
    if (header.empty()) {
      header.assign(fields.begin(), fields.end());
      if (header.size() < 3 || header[0] != "sample_id" || header[1] != "tau" || header[2] != "zeta") {
        throw Error(ErrorCode::FormatError, "snapshot header must start with sample_id,tau,zeta");
      }
      continue;
    }
    if (fields.size() != header.size()) {
      throw Error(ErrorCode::MalformedRow, "snapshot line " + std::to_string(line_number) + ": wrong field count");
    }
    SurvivalRecord r;
    r.sample_id = std::string(fields[0]);
    const auto tau = parse_double(fields[1]);
    const auto zeta = parse_int(fields[2]);
    if (!tau || !zeta || (*zeta != 0 && *zeta != 1)) {
      throw Error(ErrorCode::MalformedRow, "snapshot line " + std::to_string(line_number) + ": bad tau/zeta");
    }
    r.tau = *tau;
    r.event = *zeta == 1;
    for (std::size_t k = 3; k < fields.size(); ++k) {
      const auto v = parse_double(fields[k]);
      if (!v) throw Error(ErrorCode::MalformedRow, "snapshot line " + std::to_string(line_number) + ": bad feature");
      r.x.push_back(*v);
    }
    records.push_back(std::move(r));
  }
  if (header.empty()) throw Error(ErrorCode::FormatError, "snapshot has no table header");
  const DurationUnit unit = meta.count("duration_unit") ? parse_duration_unit(meta["duration_unit"])
                                                        : DurationUnit::Unitless;
  std::optional<int> depth;
  if (meta.count("depth") && meta["depth"] != "none") {
    const auto d = parse_int(meta["depth"]);
    if (!d) throw Error(ErrorCode::FormatError, "bad depth in snapshot metadata");
    depth = static_cast<int>(*d);
  }
  SurvivalDataset ds(std::move(records), unit, depth);
  if (meta.count("feature_dim")) {
    const auto fd = parse_int(meta["feature_dim"]);
    if (!fd || static_cast<std::size_t>(*fd) != ds.feature_dim()) {
      throw Error(ErrorCode::FormatError, "feature_dim metadata disagrees with the table");
    }
  }
  return ds;
}

}  // namespace rulsurv
