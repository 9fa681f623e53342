#include "rulsurv/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "rulsurv/error.hpp"
#include "rulsurv/text.hpp"

namespace rulsurv {

namespace fs = std::filesystem;

const char* to_string(Phase phase) noexcept {
  return phase == Phase::Charge ? "charge" : "discharge";
}

Phase parse_phase(std::string_view text) {
  if (text == "charge") return Phase::Charge;
  if (text == "discharge") return Phase::Discharge;
  throw Error(ErrorCode::ConfigError, "unknown phase '" + std::string(text) + "'");
}

void VoltagePath::validate() const {
  if (points.size() < 2) {
    throw Error(ErrorCode::DegeneratePath, "path '" + sample_id + "' has fewer than two points");
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!std::isfinite(points[i].t) || !std::isfinite(points[i].v)) {
      throw Error(ErrorCode::DegeneratePath, "path '" + sample_id + "' has a non-finite point");
    }
    if (i > 0 && !(points[i].t > points[i - 1].t)) {
      throw Error(ErrorCode::DegeneratePath,
                  "path '" + sample_id + "' is not strictly increasing in time");
    }
  }
}

RawDatasetConfig RawDatasetConfig::toyota() {
  RawDatasetConfig c;
  c.format = DatasetFormat::ToyotaCycles;
  c.failure_threshold_fraction = 0.8;
  c.max_cycles_used = 50;
  return c;
}

RawDatasetConfig RawDatasetConfig::nasa() {
  RawDatasetConfig c;
  c.format = DatasetFormat::NasaDischarge;
  c.failure_threshold_fraction = 0.7;
  c.max_cycles_used = 0;
  c.truncation_time_s = 2520.0;
  c.reference_capacity_ah = 2.0;
  return c;
}

void RawDatasetConfig::validate() const {
  if (!(failure_threshold_fraction > 0.0 && failure_threshold_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "failure threshold fraction must lie in (0,1)");
  }
  if (format == DatasetFormat::ToyotaCycles && max_cycles_used < 1) {
    throw Error(ErrorCode::InvalidArgument, "max_cycles_used must be at least 1");
  }
  if (truncation_time_s && !(*truncation_time_s > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "truncation time must be positive");
  }
  if (reference_capacity_ah && !(*reference_capacity_ah > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "reference capacity must be positive");
  }
}

namespace {

struct Table {
  fs::path file;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;

  std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw Error(ErrorCode::MalformedRow,
                file.string() + " line 1: missing column '" + std::string(name) + "'");
  }
};

Table read_table(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::MissingFile, file.string());
  Table table;
  table.file = file;
  std::string line;
  std::size_t line_number = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_number;
    if (trim(line).empty()) continue;
    auto fields = split_fields(line);
    std::vector<std::string> owned(fields.begin(), fields.end());
    if (!have_header) {
      table.header = std::move(owned);
      have_header = true;
      continue;
    }
    if (owned.size() != table.header.size()) {
      throw Error(ErrorCode::MalformedRow, file.string() + " line " + std::to_string(line_number) +
                                               ": expected " + std::to_string(table.header.size()) +
                                               " fields");
    }
    table.rows.push_back(std::move(owned));
    table.line_numbers.push_back(line_number);
  }
  if (!have_header) throw Error(ErrorCode::EmptySample, file.string() + ": no header row");
  return table;
}

[[noreturn]] void malformed(const Table& t, std::size_t row, const std::string& what) {
  throw Error(ErrorCode::MalformedRow,
              t.file.string() + " line " + std::to_string(t.line_numbers[row]) + ": " + what);
}

double number_at(const Table& t, std::size_t row, std::size_t col) {
  auto value = parse_double(t.rows[row][col]);
  if (!value || !std::isfinite(*value)) {
    malformed(t, row, "non-numeric " + t.header[col] + " '" + t.rows[row][col] + "'");
  }
  return *value;
}

int integer_at(const Table& t, std::size_t row, std::size_t col) {
  auto value = parse_int(t.rows[row][col]);
  if (!value || *value < 0) malformed(t, row, "invalid " + t.header[col] + " '" + t.rows[row][col] + "'");
  return static_cast<int>(*value);
}

struct ManifestEntry {
  std::string id;
  std::string group;
};

std::vector<ManifestEntry> read_manifest(const fs::path& root) {
  const Table t = read_table(root / "manifest.csv");
  const std::size_t id_col = t.column("sample_id");
  const std::size_t group_col = t.column("group");
  std::vector<ManifestEntry> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (t.rows[r][id_col].empty()) malformed(t, r, "empty sample_id");
    out.push_back({t.rows[r][id_col], t.rows[r][group_col]});
  }
  if (out.empty()) throw Error(ErrorCode::EmptySample, (root / "manifest.csv").string() + ": no samples");
  return out;
}

/// Per-cycle points, time-sorted, duplicate timestamps resolved to the last row.
std::map<int, std::vector<VoltagePoint>> read_series(const fs::path& file) {
  const Table t = read_table(file);
  const std::size_t cycle_col = t.column("cycle");
  const std::size_t time_col = t.column("t_seconds");
  const std::size_t volt_col = t.column("voltage");
  std::map<int, std::vector<VoltagePoint>> cycles;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const int cycle = integer_at(t, r, cycle_col);
    const double time = number_at(t, r, time_col);
    const double volt = number_at(t, r, volt_col);
    if (time < 0.0) malformed(t, r, "negative t_seconds");
    cycles[cycle].push_back({time, volt});
  }
  if (cycles.empty()) throw Error(ErrorCode::EmptySample, file.string() + ": no data rows");
  for (auto& [cycle, points] : cycles) {
    std::stable_sort(points.begin(), points.end(),
                     [](const VoltagePoint& a, const VoltagePoint& b) { return a.t < b.t; });
    std::vector<VoltagePoint> unique;
    unique.reserve(points.size());
    for (const auto& p : points) {
      if (!unique.empty() && unique.back().t == p.t) {
        unique.back() = p;
      } else {
        unique.push_back(p);
      }
    }
    if (unique.size() < 2) {
      throw Error(ErrorCode::EmptySample,
                  file.string() + ": cycle " + std::to_string(cycle) + " has fewer than two timestamps");
    }
    points = std::move(unique);
  }
  return cycles;
}

CapacityTrace read_capacity(const fs::path& file, const std::string& sample_id) {
  const Table t = read_table(file);
  const std::size_t cycle_col = t.column("cycle");
  const std::size_t cap_col = t.column("capacity_ah");
  CapacityTrace trace{sample_id, {}};
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const int cycle = integer_at(t, r, cycle_col);
    const double cap = number_at(t, r, cap_col);
    if (!(cap > 0.0)) malformed(t, r, "capacity must be positive");
    trace.per_cycle_capacity.push_back({cycle, cap});
  }
  if (trace.per_cycle_capacity.empty()) throw Error(ErrorCode::EmptySample, file.string() + ": no data rows");
  std::stable_sort(trace.per_cycle_capacity.begin(), trace.per_cycle_capacity.end(),
                   [](const CapacityPoint& a, const CapacityPoint& b) { return a.cycle < b.cycle; });
  return trace;
}

VoltagePath concatenate_cycles(const std::map<int, std::vector<VoltagePoint>>& cycles, int max_cycles,
                               const std::string& sample_id, Phase phase) {
  VoltagePath path{sample_id, phase, {}, 0};
  int used = 0;
  for (const auto& [cycle, points] : cycles) {
    if (used == max_cycles) break;
    double offset = 0.0;
    if (!path.points.empty()) {
      // Next cycle starts one of its own sampling steps after the previous end.
      const double step = points[1].t - points[0].t;
      offset = path.points.back().t + step - points.front().t;
    }
    for (const auto& p : points) path.points.push_back({p.t + offset, p.v});
    ++used;
  }
  if (used == 1) path.cycle_index = cycles.begin()->first;
  return path;
}

std::string series_file(const std::string& id, Phase phase) {
  return id + (phase == Phase::Charge ? ".charge.csv" : ".discharge.csv");
}

std::string nasa_sample_id(const std::string& battery, int cycle) {
  std::ostringstream os;
  os << battery << "_cycle_";
  os.width(3);
  os.fill('0');
  os << cycle;
  return os.str();
}

}  // namespace

std::vector<CellSeries> load_cycle_series(const fs::path& root, const RawDatasetConfig& config) {
  config.validate();
  if (!fs::exists(root)) throw Error(ErrorCode::MissingFile, root.string());
  const auto manifest = read_manifest(root);
  std::vector<CellSeries> out;

  for (const auto& entry : manifest) {
    if (config.format == DatasetFormat::ToyotaCycles) {
      CellSeries cell;
      cell.sample_id = entry.id;
      cell.source_id = entry.id;
      cell.group = entry.group;
      for (Phase phase : {Phase::Charge, Phase::Discharge}) {
        const auto cycles = read_series(root / series_file(entry.id, phase));
        auto path = concatenate_cycles(cycles, config.max_cycles_used, entry.id, phase);
        path.validate();
        (phase == Phase::Charge ? cell.charge : cell.discharge) = std::move(path);
      }
      cell.capacity = read_capacity(root / (entry.id + ".capacity.csv"), entry.id);
      out.push_back(std::move(cell));
    } else {
      const auto cycles = read_series(root / series_file(entry.id, Phase::Discharge));
      const auto capacity = read_capacity(root / (entry.id + ".capacity.csv"), entry.id);
      std::map<int, double> capacity_by_cycle;
      for (const auto& c : capacity.per_cycle_capacity) capacity_by_cycle[c.cycle] = c.capacity_ah;
      for (const auto& [cycle, points] : cycles) {
        auto it = capacity_by_cycle.find(cycle);
        if (it == capacity_by_cycle.end()) {
          throw Error(ErrorCode::EmptySample,
                      entry.id + ": no capacity recorded for cycle " + std::to_string(cycle));
        }
        CellSeries sample;
        sample.sample_id = nasa_sample_id(entry.id, cycle);
        sample.source_id = entry.id;
        sample.group = entry.group;
        sample.discharge = VoltagePath{sample.sample_id, Phase::Discharge, points, cycle};
        sample.discharge->validate();
        sample.capacity = CapacityTrace{sample.sample_id, {{cycle, it->second}}};
        out.push_back(std::move(sample));
      }
    }
  }
  return out;
}

namespace {

void write_path(std::ofstream& os, const VoltagePath& path) {
  for (const auto& p : path.points) {
    os << path.cycle_index << ',' << format_double(p.t) << ',' << format_double(p.v) << '\n';
  }
}

std::ofstream open_for_write(const fs::path& file) {
  std::ofstream os(file);
  if (!os) throw Error(ErrorCode::MissingFile, "cannot write " + file.string());
  return os;
}

}  // namespace

void write_cycle_series(const fs::path& root, const RawDatasetConfig& config,
                        std::span<const CellSeries> samples) {
  fs::create_directories(root);
  std::vector<std::pair<std::string, std::string>> sources;  // (id, group), first-seen order
  for (const auto& s : samples) {
    if (std::none_of(sources.begin(), sources.end(),
                     [&](const auto& p) { return p.first == s.source_id; })) {
      sources.emplace_back(s.source_id, s.group);
    }
  }
  {
    auto os = open_for_write(root / "manifest.csv");
    os << "sample_id,group\n";
    for (const auto& [id, group] : sources) os << id << ',' << group << '\n';
  }
  for (const auto& [id, group] : sources) {
    std::vector<const CellSeries*> members;
    for (const auto& s : samples) {
      if (s.source_id == id) members.push_back(&s);
    }
    const bool toyota = config.format == DatasetFormat::ToyotaCycles;
    for (Phase phase : {Phase::Charge, Phase::Discharge}) {
      if (phase == Phase::Charge && !toyota) continue;
      auto os = open_for_write(root / series_file(id, phase));
      os << "cycle,t_seconds,voltage\n";
      for (const auto* m : members) {
        const auto& path = phase == Phase::Charge ? m->charge : m->discharge;
        if (path) write_path(os, *path);
      }
    }
    auto os = open_for_write(root / (id + ".capacity.csv"));
    os << "cycle,capacity_ah\n";
    for (const auto* m : members) {
      for (const auto& c : m->capacity.per_cycle_capacity) {
        os << c.cycle << ',' << format_double(c.capacity_ah) << '\n';
      }
    }
  }
}

std::vector<VoltagePath> clean_nasa(std::span<const VoltagePath> samples, const RawDatasetConfig& config) {
  constexpr double kZeroVoltageTolerance = 1e-9;
  std::vector<VoltagePath> out;
  out.reserve(samples.size());
  for (const auto& sample : samples) {
    if (sample.points.empty() || std::abs(sample.points.front().v) <= kZeroVoltageTolerance) continue;
    VoltagePath kept = sample;
    if (config.truncation_time_s) {
      const double cutoff = *config.truncation_time_s;
      auto it = std::find_if(kept.points.begin(), kept.points.end(),
                             [cutoff](const VoltagePoint& p) { return p.t > cutoff; });
      kept.points.erase(it, kept.points.end());
    }
    if (kept.points.size() < 2) continue;
    out.push_back(std::move(kept));
  }
  return out;
}

FailureLabel label_failure(const CapacityTrace& trace, double threshold_fraction,
                           std::optional<double> reference_capacity_ah) {
  if (trace.per_cycle_capacity.empty()) {
    throw Error(ErrorCode::EmptyTrace, "capacity trace '" + trace.sample_id + "' is empty");
  }
  if (!(threshold_fraction > 0.0 && threshold_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "threshold fraction must lie in (0,1)");
  }
  auto points = trace.per_cycle_capacity;
  std::stable_sort(points.begin(), points.end(),
                   [](const CapacityPoint& a, const CapacityPoint& b) { return a.cycle < b.cycle; });
  const double reference = reference_capacity_ah.value_or(points.front().capacity_ah);
  const double threshold = threshold_fraction * reference;
  for (const auto& p : points) {
    if (p.capacity_ah <= threshold) return {static_cast<double>(p.cycle), true};
  }
  return {static_cast<double>(points.back().cycle), false};
}

FailureLabel label_discharge_cycle(const VoltagePath& cleaned, double capacity_ah,
                                   const RawDatasetConfig& config) {
  cleaned.validate();
  if (!config.reference_capacity_ah) {
    throw Error(ErrorCode::InvalidArgument, "discharge-cycle labelling needs a reference capacity");
  }
  const double threshold = config.failure_threshold_fraction * *config.reference_capacity_ah;
  const double duration = cleaned.points.back().t - cleaned.points.front().t;
  return {duration, capacity_ah <= threshold};
}

}  // namespace rulsurv
