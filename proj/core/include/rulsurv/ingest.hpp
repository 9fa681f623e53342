#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rulsurv {

enum class Phase { Charge, Discharge };

const char* to_string(Phase phase) noexcept;
Phase parse_phase(std::string_view text);

struct VoltagePoint {
  double t = 0.0;  // seconds
  double v = 0.0;  // volts

  friend bool operator==(const VoltagePoint&, const VoltagePoint&) = default;
};

/// One phase's voltage trajectory for one sample. Points are strictly
/// increasing in t, at least two, all finite.
struct VoltagePath {
  std::string sample_id;
  Phase phase = Phase::Discharge;
  std::vector<VoltagePoint> points;
  int cycle_index = 0;  // 0 when cycles are concatenated

  /// Throws DegeneratePath when an invariant is broken.
  void validate() const;

  friend bool operator==(const VoltagePath&, const VoltagePath&) = default;
};

struct CapacityPoint {
  int cycle = 0;
  double capacity_ah = 0.0;

  friend bool operator==(const CapacityPoint&, const CapacityPoint&) = default;
};

struct CapacityTrace {
  std::string sample_id;
  std::vector<CapacityPoint> per_cycle_capacity;

  friend bool operator==(const CapacityTrace&, const CapacityTrace&) = default;
};

enum class DatasetFormat { ToyotaCycles, NasaDischarge };

struct RawDatasetConfig {
  DatasetFormat format = DatasetFormat::ToyotaCycles;
  double failure_threshold_fraction = 0.8;
  int max_cycles_used = 50;
  std::optional<double> truncation_time_s;
  /// Capacity the threshold fraction is applied to; the first recorded
  /// cycle's capacity when absent.
  std::optional<double> reference_capacity_ah;

  /// 80% of initial capacity, first 50 cycles, no truncation.
  static RawDatasetConfig toyota();
  /// 70% of a 2.0 Ah nominal capacity (1.4 Ah), 2520 s truncation.
  static RawDatasetConfig nasa();

  void validate() const;
};

/// One loaded sample: a Toyota cell, or one NASA discharge cycle.
struct CellSeries {
  std::string sample_id;
  std::string source_id;  // manifest id of the file set this came from
  std::string group;
  std::optional<VoltagePath> charge;
  std::optional<VoltagePath> discharge;
  CapacityTrace capacity;

  friend bool operator==(const CellSeries&, const CellSeries&) = default;
};

/// Reads `manifest.csv` (sample_id,group) under `root` and, per manifest id,
/// `<id>.charge.csv` / `<id>.discharge.csv` (cycle,t_seconds,voltage) and
/// `<id>.capacity.csv` (cycle,capacity_ah).
///
/// Toyota: the first `max_cycles_used` cycles of each phase are joined into
/// one path, each cycle's clock offset so time stays strictly increasing.
/// NASA: every discharge cycle becomes its own sample with a one-point
/// capacity trace. Duplicate timestamps within a cycle keep the last row.
std::vector<CellSeries> load_cycle_series(const std::filesystem::path& root,
                                          const RawDatasetConfig& config);

/// Inverse of load_cycle_series for already-loaded samples; reloading the
/// written directory reproduces the same paths.
void write_cycle_series(const std::filesystem::path& root, const RawDatasetConfig& config,
                        std::span<const CellSeries> samples);

/// Drops samples whose first voltage is zero and truncates the rest at
/// `truncation_time_s` (points with t <= cutoff are kept). Samples left with
/// fewer than two points are dropped. Order is preserved.
std::vector<VoltagePath> clean_nasa(std::span<const VoltagePath> samples,
                                    const RawDatasetConfig& config);

struct FailureLabel {
  double tau = 0.0;
  bool event = false;

  friend bool operator==(const FailureLabel&, const FailureLabel&) = default;
};

/// First cycle whose capacity is at or below threshold_fraction x reference
/// (event), else the last observed cycle (censored).
FailureLabel label_failure(const CapacityTrace& trace, double threshold_fraction,
                           std::optional<double> reference_capacity_ah = std::nullopt);

/// Label for a single discharge cycle sample: the event is the cycle's
/// capacity being at or below the failure capacity; tau is the discharge
/// duration covered by the (already cleaned) path.
FailureLabel label_discharge_cycle(const VoltagePath& cleaned, double capacity_ah,
                                   const RawDatasetConfig& config);

}  // namespace rulsurv
