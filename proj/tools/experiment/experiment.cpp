#include "experiment/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <map>
#include <sstream>

#include "rulsurv/error.hpp"
#include "rulsurv/persistence.hpp"
#include "rulsurv/rng.hpp"
#include "rulsurv/signature.hpp"
#include "rulsurv/text.hpp"

namespace rulsurv::experiment {

namespace {

constexpr std::uint64_t kSubsampleStream = 77;

// Re-raises a module error with the pipeline stage prepended.
template <class F>
auto tagged(const std::string& stage, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const Error& e) {
    std::string msg = e.what();
    const auto colon = msg.find(": ");
    if (colon != std::string::npos) msg = msg.substr(colon + 2);
    throw Error(e.code(), "[" + stage + "] " + msg);
  }
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& p, std::ios::openmode mode = std::ios::trunc) {
  std::ofstream os(p, std::ios::out | mode);
  if (!os) throw Error(ErrorCode::MissingFile, "cannot write '" + p.string() + "'");
  return os;
}

std::optional<int> depth_of(const ExperimentConfig& config, int depth) {
  if (config.source == DatasetSource::Synthetic) return std::nullopt;
  return depth;
}

ResultRow make_row(const ExperimentConfig& config, const ModelRun& run, const SurvivalDataset& train, int depth,
                   double fraction) {
  ResultRow row;
  row.model = to_string(run.kind);
  row.phase = config.phase;
  row.depth = depth_of(config, depth);
  row.feature_dim = train.feature_dim();
  row.fraction = fraction;
  row.t_auc = run.report.t_auc;
  row.c_index = run.report.c_index;
  row.ibs = run.report.ibs;
  row.n_test = run.report.n_test;
  row.seed = config.seed;
  return row;
}

std::string leg_label(const ResultRow& row) {
  std::string label = row.model;
  if (row.depth) label += " depth=" + std::to_string(*row.depth);
  label += " fraction=" + format_double(row.fraction);
  return label;
}

void write_config(const std::filesystem::path& dir, const ExperimentConfig& config) {
  auto os = open_out(dir / "config.json");
  os << to_json(config).dump(2) << '\n';
}

}  // namespace

std::string results_header() { return "model,phase,depth,feature_dim,fraction,t_auc,c_index,ibs,n_test,seed"; }

std::string format_row(const ResultRow& r) {
  std::ostringstream os;
  os << r.model << ',' << to_string(r.phase) << ',' << (r.depth ? std::to_string(*r.depth) : std::string()) << ','
     << r.feature_dim << ',' << format_double(r.fraction) << ',' << format_double(r.t_auc) << ','
     << format_double(r.c_index) << ',' << format_double(r.ibs) << ',' << r.n_test << ',' << r.seed;
  return os.str();
}

// ---------------------------------------------------------------------------
// data preparation

SurvivalDataset build_dataset(const ExperimentConfig& config, int depth) {
  if (config.source == DatasetSource::Synthetic) {
    const auto& s = config.synthetic;
    return tagged("survdata", [&] { return generate_synthetic(s.n, s.dim, s.beta, s.censor_rate, s.seed); });
  }
  RawDatasetConfig raw = config.raw;
  raw.format = config.source == DatasetSource::Toyota ? DatasetFormat::ToyotaCycles : DatasetFormat::NasaDischarge;
  const auto series = tagged("ingest", [&] { return load_cycle_series(config.root, raw); });

  std::vector<SurvivalRecord> records;
  std::map<std::string, std::string> groups;
  const auto features = [&](const VoltagePath& path) {
    return tagged("signature", [&] {
      const AugmentedPath aug = augment_time(path);
      if (config.phase == Phase::Charge) return featurize(aug, std::nullopt, Phase::Charge, depth);
      return featurize(std::nullopt, aug, Phase::Discharge, depth);
    });
  };

  if (config.source == DatasetSource::Toyota) {
    for (const auto& cell : series) {
      const auto& path = config.phase == Phase::Charge ? cell.charge : cell.discharge;
      if (!path) {
        throw Error(ErrorCode::EmptySample, "[ingest] sample '" + cell.sample_id + "' has no " +
                                                to_string(config.phase) + " path");
      }
      const FailureLabel label = tagged("ingest", [&] {
        return label_failure(cell.capacity, raw.failure_threshold_fraction, raw.reference_capacity_ah);
      });
      records.push_back({cell.sample_id, features(*path), label.tau, label.event});
      groups[cell.sample_id] = cell.group;
    }
    return tagged("survdata", [&] { return SurvivalDataset(std::move(records), DurationUnit::Cycles, depth, groups); });
  }

  if (config.phase == Phase::Charge) {
    throw Error(ErrorCode::ConfigError, "[ingest] the NASA format carries discharge cycles only");
  }
  std::vector<VoltagePath> paths;
  std::map<std::string, const CellSeries*> by_id;
  for (const auto& s : series) {
    if (!s.discharge) continue;
    paths.push_back(*s.discharge);
    by_id[s.sample_id] = &s;
  }
  const auto cleaned = tagged("ingest", [&] { return clean_nasa(paths, raw); });
  for (const auto& path : cleaned) {
    const CellSeries& s = *by_id.at(path.sample_id);
    if (s.capacity.per_cycle_capacity.empty()) {
      throw Error(ErrorCode::EmptyTrace, "[ingest] sample '" + s.sample_id + "' has no capacity");
    }
    const double cap = s.capacity.per_cycle_capacity.front().capacity_ah;
    const FailureLabel label = tagged("ingest", [&] { return label_discharge_cycle(path, cap, raw); });
    records.push_back({path.sample_id, features(path), label.tau, label.event});
    groups[path.sample_id] = s.group;
  }
  return tagged("survdata", [&] { return SurvivalDataset(std::move(records), DurationUnit::Seconds, depth, groups); });
}

PreparedSplit prepare(DatasetSplit raw) {
  Standardizer scaler = Standardizer::fit(raw.train);
  DatasetSplit scaled{scaler.apply(raw.train), scaler.apply(raw.val), scaler.apply(raw.test)};
  return {std::move(raw), std::move(scaler), std::move(scaled)};
}

SurvivalDataset subsample_train(const SurvivalDataset& train, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw Error(ErrorCode::InvalidArgument, "fraction must lie in (0, 1]");
  if (fraction == 1.0) return train;
  std::vector<std::size_t> events;
  std::vector<std::size_t> censored;
  for (std::size_t i = 0; i < train.size(); ++i) (train[i].event ? events : censored).push_back(i);
  const auto n = static_cast<double>(train.size());
  const auto keep = static_cast<std::size_t>(std::llround(n * fraction));
  const auto keep_events = static_cast<std::size_t>(
      std::llround(static_cast<double>(events.size()) * static_cast<double>(keep) / n));
  if (keep_events == 0) {
    throw Error(ErrorCode::TooFewRecords, "training fraction " + format_double(fraction) + " leaves no events");
  }
  const std::size_t keep_censored = std::min(censored.size(), keep - std::min(keep, keep_events));
  Rng rng(seed);
  rng.shuffle(events);
  rng.shuffle(censored);
  std::vector<std::size_t> picked(events.begin(), events.begin() + static_cast<std::ptrdiff_t>(keep_events));
  picked.insert(picked.end(), censored.begin(), censored.begin() + static_cast<std::ptrdiff_t>(keep_censored));
  std::sort(picked.begin(), picked.end());
  return train.subset(picked);
}

ModelRun fit_and_evaluate(const ExperimentConfig& config, ModelKind kind, const DatasetSplit& split) {
  const std::string name = to_string(kind);
  ModelSettings settings = config.settings;
  settings.train.seed = config.seed;
  FittedModel model = tagged("models/" + name, [&] { return fit_model(kind, split.train, split.val, settings); });
  const TimeGrid grid = tagged("metrics", [&] {
    return default_eval_grid(split.test, config.eval.points, config.eval.lo_quantile, config.eval.hi_quantile);
  });
  auto times = evaluation_times(split.test, grid);
  auto curves = tagged("models/" + name, [&] { return predict_survival(model, split.test, times); });
  MetricsReport report = tagged("metrics/" + name, [&] {
    return evaluate(split.test, curves, grid, config.eval.weighting, config.eval.ipcw_cap);
  });
  return {kind, std::move(model), std::move(report), std::move(times), std::move(curves)};
}

// ---------------------------------------------------------------------------
// output

OutputSink::OutputSink(const std::filesystem::path& dir) : dir_(dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir_ / "models", ec);
  if (ec) throw Error(ErrorCode::MissingFile, "cannot create output directory '" + dir_.string() + "'");
  results_ = open_out(dir_ / "results.csv");
  results_ << results_header() << '\n';
  results_.flush();
  report_ = open_out(dir_ / "report.txt");
  curves_ = open_out(dir_ / "curves.csv");
  curves_ << "time,probability,model,sample_id\n";
  log_ = open_out(dir_ / "run.log", std::ios::app);
}

void OutputSink::row(const ResultRow& row) {
  results_ << format_row(row) << '\n';
  results_.flush();
}

void OutputSink::log(const std::string& line) {
  log_ << '[' << timestamp() << "] " << line << '\n';
  log_.flush();
}

void OutputSink::report(const std::string& label, const MetricsReport& report) {
  report_ << "[" << label << "]\n";
  write_report(report_, report);
  report_ << '\n';
  report_.flush();
}

void OutputSink::curves(const std::string& model, const SurvivalDataset& test, const ModelRun& run) {
  for (std::size_t i = 0; i < test.size(); ++i) {
    for (double t : run.report.eval_grid.points()) {
      curves_ << format_double(t) << ',' << format_double(run.curves[i].at(t)) << ',' << model << ','
              << test[i].sample_id << '\n';
    }
  }
  curves_.flush();
}

void OutputSink::model(const std::string& name, const FittedModel& model) {
  save_model_file((dir_ / "models" / (name + ".model")).string(), model);
}

void OutputSink::note(const std::string& text) {
  report_ << "note=" << text << '\n';
  report_.flush();
  log("note: " + text);
}

// ---------------------------------------------------------------------------
// drivers

namespace {

struct Base {
  PreparedSplit prepared;
  std::size_t feature_dim;
};

Base base_split(const ExperimentConfig& config, int depth, OutputSink* sink) {
  const SurvivalDataset ds = build_dataset(config, depth);
  if (sink) {
    sink->log("dataset: " + std::to_string(ds.size()) + " records, " + std::to_string(ds.event_count()) +
              " events, feature_dim " + std::to_string(ds.feature_dim()));
  }
  if (sink && config.dump_features) {
    auto os = open_out(sink->dir() / "features.csv");
    write_snapshot(os, ds);
  }
  auto parts = tagged("survdata", [&] { return split(ds, config.split, config.seed); });
  return {prepare(std::move(parts)), ds.feature_dim()};
}

void save_scaler(const std::filesystem::path& path, const Standardizer& scaler) {
  auto os = open_out(path);
  scaler.save(os);
}

std::string run_header(const ExperimentConfig& config, const char* what) {
  std::string models;
  for (auto m : config.models) models += std::string(models.empty() ? "" : ",") + to_string(m);
  return std::string(what) + ": source=" + to_string(config.source) + " phase=" + to_string(config.phase) +
         " depth=" + std::to_string(config.depth) + " seed=" + std::to_string(config.seed) + " models=" + models;
}

void finish(OutputSink& sink, RunSummary& summary, const ResultRow& row, const ModelRun& run) {
  sink.row(row);
  sink.report(leg_label(row), run.report);
  sink.log(leg_label(row) + ": t_auc=" + format_double(row.t_auc) + " c_index=" + format_double(row.c_index) +
           " ibs=" + format_double(row.ibs));
  summary.rows.push_back(row);
}

}  // namespace

RunSummary run(const ExperimentConfig& config) {
  config.validate();
  OutputSink sink(config.output_dir);
  sink.log(run_header(config, "run"));
  write_config(config.output_dir, config);
  const Base base = base_split(config, config.depth, &sink);
  save_scaler(config.output_dir / "scaler.txt", base.prepared.scaler);
  RunSummary summary;
  for (ModelKind kind : config.models) {
    const ModelRun mr = fit_and_evaluate(config, kind, base.prepared.scaled);
    const ResultRow row = make_row(config, mr, base.prepared.scaled.train, config.depth, 1.0);
    finish(sink, summary, row, mr);
    sink.curves(row.model, base.prepared.scaled.test, mr);
    sink.model(row.model, mr.model);
  }
  sink.log("run complete");
  return summary;
}

RunSummary sweep_depth(const ExperimentConfig& config) {
  config.validate();
  if (config.source == DatasetSource::Synthetic) {
    throw Error(ErrorCode::ConfigError, "sweep-depth needs signature features; synthetic data has none");
  }
  OutputSink sink(config.output_dir);
  sink.log(run_header(config, "sweep-depth"));
  write_config(config.output_dir, config);
  RunSummary summary;
  std::map<std::string, std::map<int, double>> c_by_depth;
  for (int depth : config.sweep_depths) {
    // The partition depends only on record order, event flags, and seed, so
    // every depth sees the same train/val/test membership.
    const Base base = base_split(config, depth, &sink);
    for (ModelKind kind : config.models) {
      const ModelRun mr = fit_and_evaluate(config, kind, base.prepared.scaled);
      const ResultRow row = make_row(config, mr, base.prepared.scaled.train, depth, 1.0);
      finish(sink, summary, row, mr);
      c_by_depth[row.model][depth] = row.c_index;
    }
  }
  for (const auto& [model, by_depth] : c_by_depth) {
    const auto best = std::max_element(by_depth.begin(), by_depth.end(),
                                       [](const auto& a, const auto& b) { return a.second < b.second; });
    const std::string note = model + ": best c_index at depth " + std::to_string(best->first) + " (" +
                             format_double(best->second) + ")";
    sink.note(note);
    summary.notes.push_back(note);
  }
  sink.log("sweep-depth complete");
  return summary;
}

RunSummary sweep_fraction(const ExperimentConfig& config) {
  config.validate();
  OutputSink sink(config.output_dir);
  sink.log(run_header(config, "sweep-fraction"));
  write_config(config.output_dir, config);
  const Base base = base_split(config, config.depth, &sink);
  const std::string protocol =
      "the test split is frozen and held out at every fraction; fraction 1.0 trains on the full base training split";
  sink.note(protocol);
  RunSummary summary;
  summary.notes.push_back(protocol);
  std::map<std::string, std::map<double, double>> c_by_fraction;
  for (double fraction : config.sweep_fractions) {
    const SurvivalDataset train =
        tagged("survdata", [&] { return subsample_train(base.prepared.raw.train, fraction, derive_seed(config.seed, kSubsampleStream)); });
    PreparedSplit leg = prepare(DatasetSplit{train, base.prepared.raw.val, base.prepared.raw.test});
    for (ModelKind kind : config.models) {
      const ModelRun mr = fit_and_evaluate(config, kind, leg.scaled);
      const ResultRow row = make_row(config, mr, leg.scaled.train, config.depth, fraction);
      finish(sink, summary, row, mr);
      c_by_fraction[row.model][fraction] = row.c_index;
    }
  }
  for (const auto& [model, by_fraction] : c_by_fraction) {
    if (by_fraction.size() < 2) continue;
    const auto& lo = *by_fraction.begin();
    const auto& hi = *by_fraction.rbegin();
    const bool up = hi.second >= lo.second;
    const std::string note = model + ": c_index at fraction " + format_double(hi.first) + " (" +
                             format_double(hi.second) + ") " + (up ? ">=" : "<") + " c_index at fraction " +
                             format_double(lo.first) + " (" + format_double(lo.second) + ")" +
                             (up ? ", monotone trend holds" : ", monotone trend does not hold");
    sink.note(note);
    summary.notes.push_back(note);
  }
  sink.log("sweep-fraction complete");
  return summary;
}

void predict(const std::filesystem::path& model_path, const std::filesystem::path& features_path,
             const std::optional<std::filesystem::path>& scaler_path, const std::vector<double>& times,
             const std::filesystem::path& out_dir) {
  const FittedModel model = tagged("models", [&] { return load_model_file(model_path.string()); });
  std::ifstream fs(features_path);
  if (!fs) throw Error(ErrorCode::MissingFile, "[survdata] cannot open feature file '" + features_path.string() + "'");
  SurvivalDataset data = tagged("survdata", [&] { return read_snapshot(fs); });
  if (scaler_path) {
    std::ifstream ss(*scaler_path);
    if (!ss) throw Error(ErrorCode::MissingFile, "[survdata] cannot open scaler file '" + scaler_path->string() + "'");
    const Standardizer scaler = tagged("survdata", [&] { return Standardizer::load(ss); });
    data = tagged("survdata", [&] { return scaler.apply(data); });
  }
  std::vector<double> eval = times;
  if (eval.empty()) eval = tagged("metrics", [&] { return default_eval_grid(data).points(); });
  const auto curves = tagged("models", [&] { return predict_survival(model, data, eval); });
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  auto os = open_out(out_dir / "curves.csv");
  os << "time,probability,model,sample_id\n";
  const std::string name = to_string(kind_of(model));
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t k = 0; k < eval.size(); ++k) {
      os << format_double(eval[k]) << ',' << format_double(curves[i].probabilities[k]) << ',' << name << ','
         << data[i].sample_id << '\n';
    }
  }
}

}  // namespace rulsurv::experiment
