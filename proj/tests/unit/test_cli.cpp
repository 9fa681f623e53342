#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "experiment/experiment.hpp"
#include "rulsurv/error.hpp"
#include "support/battery_sim.hpp"
#include "support/temp_dir.hpp"

using namespace rulsurv;
using rulsurv::testing::TempDir;
namespace fs = std::filesystem;

namespace {

int cli(const std::string& args) {
  const std::string cmd = std::string(RULSURV_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream is(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

std::vector<std::string> fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string f; std::getline(ss, f, ',');) out.push_back(f);
  return out;
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream os(p);
  os << text;
}

const char* kSynthetic = R"({"dataset": {"source": "synthetic", "synthetic": {"n": 240, "seed": 4}}, "models": ["cox"]})";

}  // namespace

TEST(Cli, SyntheticRunWritesOneRowAndIsReproducible) {
  TempDir dir("cli_run");
  write(dir / "c.json", kSynthetic);
  const auto out1 = dir / "a";
  const auto out2 = dir / "b";
  ASSERT_EQ(cli("run --config " + (dir / "c.json").string() + " --out " + out1.string()), 0);
  ASSERT_EQ(cli("run --config " + (dir / "c.json").string() + " --out " + out2.string()), 0);
  const auto rows = lines(out1 / "results.csv");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], experiment::results_header());
  const auto f = fields(rows[1]);
  ASSERT_EQ(f.size(), 10u);
  EXPECT_EQ(f[0], "cox");
  EXPECT_EQ(f[2], "");  // no signature depth for generated features
  EXPECT_EQ(f[3], "4");
  EXPECT_EQ(slurp(out1 / "results.csv"), slurp(out2 / "results.csv"));
  EXPECT_TRUE(fs::exists(out1 / "models" / "cox.model"));
  EXPECT_TRUE(fs::exists(out1 / "config.json"));
  EXPECT_TRUE(fs::exists(out1 / "run.log"));
  EXPECT_EQ(lines(out1 / "curves.csv").front(), "time,probability,model,sample_id");
}

TEST(Cli, SeedOverrideChangesSplit) {
  TempDir dir("cli_seed");
  write(dir / "c.json", kSynthetic);
  ASSERT_EQ(cli("run --config " + (dir / "c.json").string() + " --seed 11 --out " + (dir / "a").string()), 0);
  ASSERT_EQ(cli("run --config " + (dir / "c.json").string() + " --seed 12 --out " + (dir / "b").string()), 0);
  EXPECT_NE(slurp(dir / "a" / "results.csv"), slurp(dir / "b" / "results.csv"));
}

TEST(Cli, DepthSweepOnSimulatedCells) {
  TempDir dir("cli_depth");
  sim::write_toyota(dir / "raw");
  write(dir / "c.json", R"({"dataset": {"source": "toyota", "root": ")" + (dir / "raw").string() +
                            R"("}, "models": ["cox"], "sweep": {"depths": [2, 3, 4]}})");
  ASSERT_EQ(cli("sweep-depth --config " + (dir / "c.json").string() + " --out " + (dir / "o").string()), 0);
  const auto rows = lines(dir / "o" / "results.csv");
  ASSERT_EQ(rows.size(), 4u);
  const std::vector<std::string> dims{"6", "14", "30"};
  for (std::size_t i = 0; i < 3; ++i) {
    const auto f = fields(rows[i + 1]);
    EXPECT_EQ(f[2], std::to_string(2 + i));
    EXPECT_EQ(f[3], dims[i]);
  }
  EXPECT_NE(slurp(dir / "o" / "report.txt").find("best c_index at depth"), std::string::npos);
}

TEST(Cli, FractionSweepFullLegMatchesBaseRun) {
  TempDir dir("cli_fraction");
  write(dir / "c.json", R"({"dataset": {"source": "synthetic", "synthetic": {"n": 240, "seed": 4}},
                            "models": ["cox"], "sweep": {"fractions": [0.25, 0.5, 1.0]}})");
  ASSERT_EQ(cli("run --config " + (dir / "c.json").string() + " --out " + (dir / "base").string()), 0);
  ASSERT_EQ(cli("sweep-fraction --config " + (dir / "c.json").string() + " --out " + (dir / "sw").string()), 0);
  const auto base = lines(dir / "base" / "results.csv");
  const auto sweep = lines(dir / "sw" / "results.csv");
  ASSERT_EQ(sweep.size(), 4u);
  EXPECT_EQ(fields(sweep[1])[4], "0.25");
  EXPECT_EQ(sweep[3], base[1]);
  const std::string report = slurp(dir / "sw" / "report.txt");
  EXPECT_NE(report.find("monotone trend"), std::string::npos);
  EXPECT_NE(report.find("held out"), std::string::npos);
}

TEST(Cli, PredictRoundTrip) {
  TempDir dir("cli_predict");
  write(dir / "c.json", R"({"dataset": {"source": "synthetic", "synthetic": {"n": 120, "seed": 4}},
                            "models": ["cox"], "dump_features": true})");
  const auto out = dir / "o";
  ASSERT_EQ(cli("run --config " + (dir / "c.json").string() + " --out " + out.string()), 0);
  ASSERT_EQ(cli("predict --model " + (out / "models" / "cox.model").string() + " --features " +
                (out / "features.csv").string() + " --scaler " + (out / "scaler.txt").string() +
                " --times 0.5,1,2 --out " + (dir / "p").string()),
            0);
  const auto rows = lines(dir / "p" / "curves.csv");
  ASSERT_EQ(rows.size(), 1u + 120u * 3u);
  EXPECT_EQ(rows[0], "time,probability,model,sample_id");
  double prev = 1.0;
  for (std::size_t k = 1; k <= 3; ++k) {
    const auto f = fields(rows[k]);
    EXPECT_EQ(f[2], "cox");
    const double p = std::stod(f[1]);
    EXPECT_LE(p, prev);
    prev = p;
  }
}

TEST(Cli, ExitCodes) {
  TempDir dir("cli_exit");
  EXPECT_EQ(cli(""), 2);
  EXPECT_EQ(cli("frobnicate"), 2);
  EXPECT_EQ(cli("run --seed -1"), 2);
  write(dir / "bad.json", R"({"depht": 3})");
  EXPECT_EQ(cli("run --config " + (dir / "bad.json").string()), 2);
  write(dir / "broken.json", "{ not json");
  EXPECT_EQ(cli("run --config " + (dir / "broken.json").string()), 2);
  EXPECT_EQ(cli("run --config " + (dir / "absent.json").string()), 2);
  write(dir / "deep.json", R"({"dataset": {"source": "toyota", "root": ")" + (dir / "raw").string() + R"("}, "depth": 13})");
  sim::write_toyota(dir / "raw", {.cells = 12});
  EXPECT_EQ(cli("run --config " + (dir / "deep.json").string() + " --out " + (dir / "o1").string()), 2);
  write(dir / "nodata.json", R"({"dataset": {"source": "toyota", "root": ")" + (dir / "missing").string() + R"("}})");
  EXPECT_EQ(cli("run --config " + (dir / "nodata.json").string() + " --out " + (dir / "o2").string()), 3);
  EXPECT_EQ(cli("predict --model " + (dir / "none.model").string() + " --features x.csv"), 3);

  // Features of the wrong width for the saved model.
  write(dir / "c.json", R"({"dataset": {"source": "synthetic", "synthetic": {"n": 120}}, "models": ["cox"]})");
  ASSERT_EQ(cli("run --config " + (dir / "c.json").string() + " --out " + (dir / "o3").string()), 0);
  write(dir / "narrow.json", R"({"dataset": {"source": "synthetic", "synthetic": {"n": 120, "dim": 3, "beta": [1, 0, 0]}},
                                 "models": ["cox"], "dump_features": true})");
  ASSERT_EQ(cli("run --config " + (dir / "narrow.json").string() + " --out " + (dir / "o4").string()), 0);
  EXPECT_EQ(cli("predict --model " + (dir / "o3" / "models" / "cox.model").string() + " --features " +
                (dir / "o4" / "features.csv").string() + " --out " + (dir / "p").string()),
            4);
}

TEST(Config, DefaultsAndRoundTrip) {
  const auto c = experiment::parse_config(nlohmann::json::object());
  EXPECT_EQ(c.source, experiment::DatasetSource::Synthetic);
  EXPECT_EQ(c.depth, 3);
  EXPECT_EQ(c.models.size(), 5u);
  EXPECT_EQ(c.seed, 10u);
  const auto again = experiment::parse_config(experiment::to_json(c));
  EXPECT_EQ(experiment::to_json(again), experiment::to_json(c));
}

TEST(Config, RejectsUnknownAndInvalid) {
  const auto code = [](const char* text) {
    try {
      experiment::parse_config(nlohmann::json::parse(text));
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::FormatError;
  };
  EXPECT_EQ(code(R"({"hyperparameters": {"train": {"lr": 0.1}}})"), ErrorCode::ConfigError);
  EXPECT_EQ(code(R"({"models": ["rsf"]})"), ErrorCode::ConfigError);
  EXPECT_EQ(code(R"({"split": {"train": 0.9, "val": 0.2, "test": 0.1}})"), ErrorCode::ConfigError);
  EXPECT_EQ(code(R"({"dataset": {"source": "kaggle"}})"), ErrorCode::ConfigError);
  EXPECT_EQ(code(R"({"depth": "three"})"), ErrorCode::ConfigError);
}

TEST(Config, SourceSetsThresholdDefaults) {
  const auto nasa = experiment::parse_config(nlohmann::json::parse(R"({"dataset": {"source": "nasa", "root": "/data/nasa"}})"));
  EXPECT_EQ(nasa.raw.failure_threshold_fraction, RawDatasetConfig::nasa().failure_threshold_fraction);
  const auto toyota = experiment::parse_config(nlohmann::json::parse(R"({"dataset": {"source": "toyota", "root": "/data/toyota"}})"));
  EXPECT_EQ(toyota.raw.failure_threshold_fraction, RawDatasetConfig::toyota().failure_threshold_fraction);
}

TEST(Subsample, NestedAndStratified) {
  const std::vector<double> beta{1.0, 0.0};
  const auto data = generate_synthetic(200, 2, beta, 0.4, 3);
  const auto quarter = experiment::subsample_train(data, 0.25, 5);
  const auto half = experiment::subsample_train(data, 0.5, 5);
  EXPECT_EQ(quarter.size(), 50u);
  EXPECT_EQ(half.size(), 100u);
  std::set<std::string> ids;
  for (const auto& r : half.records()) ids.insert(r.sample_id);
  for (const auto& r : quarter.records()) EXPECT_TRUE(ids.count(r.sample_id)) << r.sample_id;
  const double rate = static_cast<double>(data.event_count()) / 200.0;
  EXPECT_NEAR(static_cast<double>(quarter.event_count()) / 50.0, rate, 0.03);
  EXPECT_EQ(experiment::subsample_train(data, 1.0, 5).records(), data.records());
}
