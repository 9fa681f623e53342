#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rulsurv/ingest.hpp"
#include "rulsurv/metrics.hpp"
#include "rulsurv/models.hpp"
#include "rulsurv/survdata.hpp"

namespace rulsurv::experiment {

enum class DatasetSource { Toyota, Nasa, Synthetic };

const char* to_string(DatasetSource source) noexcept;

struct SyntheticParams {
  std::size_t n = 500;
  std::size_t dim = 4;
  std::vector<double> beta{1.5, -1.0, 0.0, 0.75};
  double censor_rate = 0.3;
  std::uint64_t seed = 7;
};

struct EvalSettings {
  std::size_t points = 50;
  double lo_quantile = 0.05;
  double hi_quantile = 0.95;
  AucWeighting weighting = AucWeighting::EventDensity;
  double ipcw_cap = kDefaultIpcwCap;
};

/// One file fully describes a run; every field has the default listed in
/// the README table.
struct ExperimentConfig {
  DatasetSource source = DatasetSource::Synthetic;
  std::filesystem::path root;
  RawDatasetConfig raw = RawDatasetConfig::toyota();
  SyntheticParams synthetic;
  Phase phase = Phase::Discharge;
  int depth = 3;
  std::vector<ModelKind> models{ModelKind::LinearCox, ModelKind::CoxPH, ModelKind::CoxTime, ModelKind::DeepHit,
                                ModelKind::Mtlr};
  SplitFractions split;
  std::uint64_t seed = 10;
  ModelSettings settings;
  EvalSettings eval;
  std::vector<int> sweep_depths{2, 3, 4};
  std::vector<double> sweep_fractions{0.25, 0.5, 0.75, 1.0};
  std::filesystem::path output_dir = "rulsurv_out";
  bool dump_features = false;

  /// Throws ConfigError on an invalid combination.
  void validate() const;
};

/// Parses a JSON config; absent keys keep their defaults, unknown keys are
/// rejected. Dataset threshold defaults follow the chosen source.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Fully expanded config, suitable for writing next to the results.
nlohmann::json to_json(const ExperimentConfig& config);

struct ResultRow {
  std::string model;
  Phase phase = Phase::Discharge;
  std::optional<int> depth;
  std::size_t feature_dim = 0;
  double fraction = 1.0;
  double t_auc = 0.0;
  double c_index = 0.0;
  double ibs = 0.0;
  std::size_t n_test = 0;
  std::uint64_t seed = 0;
};

std::string results_header();
std::string format_row(const ResultRow& row);

/// Ingest, featurize, and label (or generate) the dataset at `depth`.
SurvivalDataset build_dataset(const ExperimentConfig& config, int depth);

struct PreparedSplit {
  DatasetSplit raw;
  Standardizer scaler;
  DatasetSplit scaled;
};

/// Standardizer fitted on raw.train, applied to all three parts.
PreparedSplit prepare(DatasetSplit raw);

/// Stratified seeded subsample of the training records; fraction 1 returns
/// the input unchanged.
SurvivalDataset subsample_train(const SurvivalDataset& train, double fraction, std::uint64_t seed);

struct ModelRun {
  ModelKind kind;
  FittedModel model;
  MetricsReport report;
  std::vector<double> eval_times;
  std::vector<SurvivalCurve> curves;  // one per test record, sampled at eval_times
};

/// Fit one model on split.train (early stopping on split.val) and evaluate
/// it on split.test.
ModelRun fit_and_evaluate(const ExperimentConfig& config, ModelKind kind, const DatasetSplit& split);

/// Writer for one output directory: results.csv rows are flushed as they
/// arrive, run.log lines are appended with UTC timestamps.
class OutputSink {
 public:
  explicit OutputSink(const std::filesystem::path& dir);

  const std::filesystem::path& dir() const noexcept { return dir_; }
  void row(const ResultRow& row);
  void log(const std::string& line);
  void report(const std::string& label, const MetricsReport& report);
  void curves(const std::string& model, const SurvivalDataset& test, const ModelRun& run);
  void model(const std::string& name, const FittedModel& model);
  void note(const std::string& text);

 private:
  std::filesystem::path dir_;
  std::ofstream results_;
  std::ofstream report_;
  std::ofstream curves_;
  std::ofstream log_;
};

struct RunSummary {
  std::vector<ResultRow> rows;
  std::vector<std::string> notes;
};

RunSummary run(const ExperimentConfig& config);
RunSummary sweep_depth(const ExperimentConfig& config);
RunSummary sweep_fraction(const ExperimentConfig& config);

/// Curves for every record of a snapshot under a saved model.
void predict(const std::filesystem::path& model_path, const std::filesystem::path& features_path,
             const std::optional<std::filesystem::path>& scaler_path, const std::vector<double>& times,
             const std::filesystem::path& out_dir);

}  // namespace rulsurv::experiment
