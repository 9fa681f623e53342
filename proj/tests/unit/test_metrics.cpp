#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "rulsurv/error.hpp"
#include "rulsurv/metrics.hpp"
#include "rulsurv/rng.hpp"
#include "support/oracles.hpp"

using namespace rulsurv;

namespace {

SurvivalDataset make(const std::vector<double>& tau, const std::vector<int>& event) {
  std::vector<SurvivalRecord> recs;
  for (std::size_t i = 0; i < tau.size(); ++i) recs.push_back({"r" + std::to_string(i), {0.0}, tau[i], event[i] != 0});
  return SurvivalDataset(recs, DurationUnit::Cycles);
}

// Curve whose value is `level` from the first sample time on.
SurvivalCurve flat(const std::vector<double>& times, double level) {
  return SurvivalCurve{times, std::vector<double>(times.size(), level)};
}

SurvivalCurve exp_curve(const std::vector<double>& times, double rate) {
  SurvivalCurve c{times, {}};
  for (double t : times) c.probabilities.push_back(std::exp(-rate * t));
  return c;
}

struct Fixture {
  SurvivalDataset data;
  std::vector<SurvivalCurve> curves;
  TimeGrid grid;
};

Fixture random_fixture(Rng& rng, std::size_t n, double censor) {
  std::vector<double> tau;
  std::vector<int> ev;
  for (std::size_t i = 0; i < n; ++i) {
    tau.push_back(0.5 + std::round(40.0 * rng.uniform()) / 8.0);
    ev.push_back(i == 0 || rng.uniform() > censor ? 1 : 0);
  }
  auto data = make(tau, ev);
  auto grid = default_eval_grid(data, 15);
  const auto times = evaluation_times(data, grid);
  std::vector<SurvivalCurve> curves;
  for (std::size_t i = 0; i < n; ++i) curves.push_back(exp_curve(times, 0.1 + 0.05 * static_cast<double>(rng.index(8))));
  return {std::move(data), std::move(curves), std::move(grid)};
}

}  // namespace

TEST(CIndex, PerfectAndReversed) {
  const auto d = make({1, 2, 3}, {1, 1, 1});
  const std::vector<double> t{1, 2, 3};
  const std::vector<SurvivalCurve> good{flat(t, 0.1), flat(t, 0.5), flat(t, 0.9)};
  const std::vector<SurvivalCurve> bad{flat(t, 0.9), flat(t, 0.5), flat(t, 0.1)};
  EXPECT_EQ(c_index(d, good), 1.0);
  EXPECT_EQ(c_index(d, bad), 0.0);
}

TEST(CIndex, FiveMixedRecordsMatchOracle) {
  const auto d = make({2, 1, 4, 3, 5}, {1, 1, 0, 1, 1});
  const std::vector<double> t{1, 2, 3, 4, 5};
  const std::vector<SurvivalCurve> c{exp_curve(t, 0.3), exp_curve(t, 0.2), exp_curve(t, 0.1), exp_curve(t, 0.4),
                                     exp_curve(t, 0.3)};
  EXPECT_EQ(c_index(d, c), oracle::brute_c_index(d, c));
}

TEST(CIndex, NoComparablePairs) {
  const auto d = make({1, 2}, {0, 1});
  const std::vector<double> t{1, 2};
  const std::vector<SurvivalCurve> c{flat(t, 0.5), flat(t, 0.5)};
  try {
    c_index(d, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoComparablePairs);
  }
}

TEST(TAuc, PerfectAndUninformative) {
  const auto d = make({1, 2, 3, 4, 5, 6}, {1, 1, 1, 1, 1, 1});
  const std::vector<double> t{1, 2, 3, 4, 5, 6};
  std::vector<SurvivalCurve> perfect;
  for (double tau : t) {
    SurvivalCurve c{t, {}};
    for (double s : t) c.probabilities.push_back(s < tau ? 1.0 : 0.0);
    perfect.push_back(c);
  }
  const TimeGrid grid({1.5, 2.5, 3.5, 4.5});
  const auto g = km_estimate(d, KmTarget::Censoring);
  EXPECT_EQ(t_auc(d, perfect, grid, g), 1.0);
  const std::vector<SurvivalCurve> same(6, flat(t, 0.5));
  EXPECT_EQ(t_auc(d, same, grid, g), 0.5);
}

TEST(TAuc, SixRecordCensoredFixture) {
  const auto d = make({1, 2, 3, 4, 5, 6}, {1, 0, 1, 1, 0, 1});
  const std::vector<double> t{1, 2, 3, 4, 5, 6};
  const std::vector<SurvivalCurve> c{exp_curve(t, 0.5), exp_curve(t, 0.1), exp_curve(t, 0.3),
                                     exp_curve(t, 0.35), exp_curve(t, 0.2), exp_curve(t, 0.05)};
  const TimeGrid grid({1.5, 3.0, 4.5});
  const auto g = km_estimate(d, KmTarget::Censoring);
  EXPECT_NEAR(t_auc(d, c, grid, g), oracle::brute_t_auc(d, c, grid.points(), kDefaultIpcwCap), 1e-12);

  // At t=3 the cases are records 0 (weight 1) and 2 (weight 1/G(3-) = 5/4),
  // the controls 3, 4, 5; record 2 is discordant with record 3 only.
  const auto points = t_auc_curve(d, c, grid, g);
  ASSERT_EQ(points.size(), 3u);
  const double w2 = 1.25;
  EXPECT_NEAR(points[1].auc, (3.0 + w2 * 2.0) / ((1.0 + w2) * 3.0), 1e-15);
}

TEST(TAuc, DegenerateTime) {
  const auto d = make({1, 2}, {0, 0});
  const std::vector<double> t{1, 2};
  const std::vector<SurvivalCurve> c{flat(t, 0.5), flat(t, 0.5)};
  const auto g = km_estimate(d, KmTarget::Censoring);
  try {
    t_auc(d, c, TimeGrid({1.2, 1.8}), g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateTime);
  }
}

TEST(Ibs, OracleAndConstantPredictors) {
  const auto d = make({1, 2, 3, 4}, {1, 1, 1, 1});
  const std::vector<double> t{0.5, 1, 1.5, 2, 2.5, 3, 3.5, 4};
  std::vector<SurvivalCurve> step;
  for (double tau : {1.0, 2.0, 3.0, 4.0}) {
    SurvivalCurve c{t, {}};
    for (double s : t) c.probabilities.push_back(s < tau ? 1.0 : 0.0);
    step.push_back(c);
  }
  const TimeGrid grid({0.5, 1.5, 2.5, 3.5});
  const auto g = km_estimate(d, KmTarget::Censoring);
  EXPECT_EQ(ibs(d, step, grid, g), 0.0);
  const std::vector<SurvivalCurve> half(4, flat(t, 0.5));
  EXPECT_DOUBLE_EQ(ibs(d, half, grid, g), 0.25);
}

TEST(Ibs, SixRecordCensoredFixture) {
  const auto d = make({1, 2, 3, 4, 5, 6}, {1, 0, 1, 1, 0, 1});
  const std::vector<double> t{1, 2, 3, 4, 5, 6};
  const std::vector<SurvivalCurve> c{exp_curve(t, 0.5), exp_curve(t, 0.1), exp_curve(t, 0.3),
                                     exp_curve(t, 0.35), exp_curve(t, 0.2), exp_curve(t, 0.05)};
  const TimeGrid grid({1.5, 3.0, 4.5});
  const auto g = km_estimate(d, KmTarget::Censoring);
  EXPECT_NEAR(ibs(d, c, grid, g), oracle::brute_ibs(d, c, grid.points(), kDefaultIpcwCap), 1e-12);
}

TEST(Oracles, RandomFixturesMatch) {
  Rng rng(77);
  for (int f = 0; f < 40; ++f) {
    const auto fx = random_fixture(rng, 5 + rng.index(96), 0.4);
    const auto g = km_estimate(fx.data, KmTarget::Censoring);
    EXPECT_EQ(c_index(fx.data, fx.curves), oracle::brute_c_index(fx.data, fx.curves));
    EXPECT_NEAR(t_auc(fx.data, fx.curves, fx.grid, g),
                oracle::brute_t_auc(fx.data, fx.curves, fx.grid.points(), kDefaultIpcwCap), 1e-12);
    EXPECT_NEAR(ibs(fx.data, fx.curves, fx.grid, g),
                oracle::brute_ibs(fx.data, fx.curves, fx.grid.points(), kDefaultIpcwCap), 1e-12);
  }
}

TEST(Invariance, RankMetricsDependOnlyOnOrder) {
  Rng rng(78);
  for (int f = 0; f < 10; ++f) {
    const auto fx = random_fixture(rng, 40, 0.3);
    auto warped = fx.curves;
    for (auto& c : warped) {
      for (double& p : c.probabilities) p = std::pow(p, 3.0) * 0.9;
    }
    const auto g = km_estimate(fx.data, KmTarget::Censoring);
    EXPECT_EQ(c_index(fx.data, fx.curves), c_index(fx.data, warped));
    EXPECT_EQ(t_auc(fx.data, fx.curves, fx.grid, g), t_auc(fx.data, warped, fx.grid, g));
  }
}

TEST(Invariance, UncensoredIbsIsClassicBrier) {
  Rng rng(79);
  for (int f = 0; f < 10; ++f) {
    const auto fx = random_fixture(rng, 30, 0.0);
    const auto g = km_estimate(fx.data, KmTarget::Censoring);
    for (double t : fx.grid.points()) EXPECT_EQ(ipcw_weight(g, t), 1.0);
    EXPECT_NEAR(ibs(fx.data, fx.curves, fx.grid, g),
                oracle::classic_brier_average(fx.data, fx.curves, fx.grid.points()), 1e-12);
  }
}

TEST(EvalGrid, QuantileEndpoints) {
  std::vector<double> tau;
  std::vector<int> ev;
  for (int i = 0; i <= 100; ++i) {
    tau.push_back(1.0 + i);
    ev.push_back(1);
  }
  const auto g = default_eval_grid(make(tau, ev));
  EXPECT_EQ(g.size(), 50u);
  EXPECT_DOUBLE_EQ(g.front(), 6.0);
  EXPECT_DOUBLE_EQ(g.back(), 96.0);
  EXPECT_THROW(default_eval_grid(make({2, 2, 2}, {1, 1, 1})), Error);
}

TEST(Evaluate, ReportCarriesNotes) {
  Rng rng(80);
  const auto fx = random_fixture(rng, 60, 0.5);
  const auto r = evaluate(fx.data, fx.curves, fx.grid);
  EXPECT_EQ(r.n_test, 60u);
  EXPECT_TRUE(std::isfinite(r.t_auc) && std::isfinite(r.c_index) && std::isfinite(r.ibs));
  const auto g = km_estimate(fx.data, KmTarget::Censoring);
  EXPECT_EQ(r.c_index, c_index(fx.data, fx.curves));
  EXPECT_EQ(r.ibs, ibs(fx.data, fx.curves, fx.grid, g));
  std::ostringstream os;
  write_report(os, r);
  EXPECT_NE(os.str().find("c_index="), std::string::npos);

  const auto heavy = evaluate(fx.data, fx.curves, fx.grid, AucWeighting::EventDensity, 1.5);
  bool clamp_note = false;
  for (const auto& n : heavy.notes) clamp_note = clamp_note || n.find("clamped") != std::string::npos;
  EXPECT_TRUE(clamp_note);
}

TEST(Metrics, CurveCountMismatch) {
  const auto d = make({1, 2}, {1, 1});
  const std::vector<SurvivalCurve> one{flat({1, 2}, 0.5)};
  EXPECT_THROW(c_index(d, one), Error);
}
