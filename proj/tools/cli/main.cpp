#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "experiment/experiment.hpp"
#include "rulsurv/error.hpp"
#include "rulsurv/text.hpp"

#ifdef RULSURV_HAVE_ACCEPTANCE
#include "acceptance/criteria.hpp"
#endif

namespace fs = std::filesystem;
using namespace rulsurv;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct CommonFlags {
  std::string config;
  std::optional<std::int64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config, "experiment config (JSON)");
  cmd->add_option("--seed", flags.seed, "overrides the split and training seed");
  cmd->add_option("--out", flags.out, "output directory");
}

experiment::ExperimentConfig resolve(const CommonFlags& flags) {
  auto config = flags.config.empty() ? experiment::ExperimentConfig{} : experiment::load_config(flags.config);
  if (flags.seed) {
    if (*flags.seed < 0) throw Error(ErrorCode::ConfigError, "--seed must be non-negative");
    config.seed = static_cast<std::uint64_t>(*flags.seed);
    config.settings.train.seed = config.seed;
  }
  if (!flags.out.empty()) config.output_dir = flags.out;
  config.validate();
  return config;
}

std::vector<double> parse_times(const std::string& text) {
  std::vector<double> times;
  if (text.empty()) return times;
  for (auto field : split_fields(text)) {
    const auto value = parse_double(field);
    if (!value) throw Error(ErrorCode::ConfigError, "bad --times entry '" + std::string(field) + "'");
    times.push_back(*value);
  }
  return times;
}

void print_summary(const experiment::RunSummary& summary) {
  std::cout << experiment::results_header() << '\n';
  for (const auto& row : summary.rows) std::cout << experiment::format_row(row) << '\n';
  for (const auto& note : summary.notes) std::cout << "note: " << note << '\n';
}

int exit_code_for(ErrorClass cls) {
  switch (cls) {
    case ErrorClass::Config:
      return kExitConfig;
    case ErrorClass::Data:
      return kExitData;
    case ErrorClass::Numeric:
      return kExitNumeric;
  }
  return kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Battery remaining-useful-life survival experiments"};
  app.require_subcommand(1);

  CommonFlags run_flags;
  CommonFlags depth_flags;
  CommonFlags fraction_flags;
  auto* run_cmd = app.add_subcommand("run", "fit and evaluate every configured model");
  add_common(run_cmd, run_flags);
  auto* depth_cmd = app.add_subcommand("sweep-depth", "repeat the run for each configured signature depth");
  add_common(depth_cmd, depth_flags);
  auto* fraction_cmd = app.add_subcommand("sweep-fraction", "repeat the run on training subsamples");
  add_common(fraction_cmd, fraction_flags);

  std::string model_path;
  std::string features_path;
  std::string scaler_path;
  std::string times_text;
  std::string predict_out = "rulsurv_out";
  auto* predict_cmd = app.add_subcommand("predict", "survival curves from a saved model and a feature file");
  predict_cmd->add_option("--model", model_path, "model blob")->required();
  predict_cmd->add_option("--features", features_path, "dataset snapshot")->required();
  predict_cmd->add_option("--scaler", scaler_path, "standardizer written by run");
  predict_cmd->add_option("--times", times_text, "comma-separated evaluation times");
  predict_cmd->add_option("--out", predict_out, "output directory");

  auto* selftest_cmd = app.add_subcommand("selftest", "run the acceptance suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (run_cmd->parsed()) {
      print_summary(experiment::run(resolve(run_flags)));
    } else if (depth_cmd->parsed()) {
      print_summary(experiment::sweep_depth(resolve(depth_flags)));
    } else if (fraction_cmd->parsed()) {
      print_summary(experiment::sweep_fraction(resolve(fraction_flags)));
    } else if (predict_cmd->parsed()) {
      std::optional<fs::path> scaler;
      if (!scaler_path.empty()) scaler = scaler_path;
      experiment::predict(model_path, features_path, scaler, parse_times(times_text), predict_out);
    } else if (selftest_cmd->parsed()) {
#ifdef RULSURV_HAVE_ACCEPTANCE
      const auto results = acceptance::run_all();
      return acceptance::report(std::cout, results) == 0 ? kExitOk : kExitNumeric;
#else
      std::cerr << "selftest: acceptance suites were not built\n";
      return kExitConfig;
#endif
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.error_class());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: ConfigError: " << e.what() << '\n';
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  }
  return kExitOk;
}
