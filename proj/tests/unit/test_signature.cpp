#include <gtest/gtest.h>

#include <cmath>

#include "rulsurv/error.hpp"
#include "rulsurv/rng.hpp"
#include "rulsurv/signature.hpp"
#include "support/oracles.hpp"

using namespace rulsurv;

namespace {

AugmentedPath random_path(Rng& rng, std::size_t n) {
  std::vector<double> coords;
  double t = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    coords.push_back(t);
    coords.push_back(3.0 + rng.normal());
    t += 0.1 + rng.uniform();
  }
  return AugmentedPath(2, coords);
}

}  // namespace

TEST(AugmentTime, NormalizesTimeKeepsVolts) {
  const auto a = augment_time(VoltagePath{"s", Phase::Discharge, {{0, 3.3}, {10, 3.0}}, 0});
  EXPECT_EQ(a.coordinates(), (std::vector<double>{0.0, 3.3, 1.0, 3.0}));
  const auto b = augment_time(VoltagePath{"s", Phase::Discharge, {{5, 3.3}, {10, 3.2}, {15, 3.0}}, 0});
  EXPECT_EQ(b.point(0)[0], 0.0);
  EXPECT_EQ(b.point(1)[0], 0.5);
  EXPECT_EQ(b.point(2)[0], 1.0);
  EXPECT_THROW(augment_time(VoltagePath{"s", Phase::Discharge, {{5, 3.3}}, 0}), Error);
}

TEST(Signature, LinearSegment) {
  const AugmentedPath p(2, {0.0, 0.0, 1.0, 1.0});
  EXPECT_EQ(signature(p, 2).values, (std::vector<double>{1, 1, 0.5, 0.5, 0.5, 0.5}));
}

TEST(Signature, LShapedPath) {
  const std::vector<double> coords{0, 0, 1, 0, 1, 1};
  EXPECT_EQ(polyline_signature(2, coords, 2).values, (std::vector<double>{1, 1, 0.5, 1, 0, 0.5}));
}

TEST(Signature, LevelOneIsIncrement) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_path(rng, 2 + rng.index(10));
    const auto lvl = signature(p, 1).values;
    const auto last = p.point(p.size() - 1);
    EXPECT_EQ(lvl[0], last[0] - p.point(0)[0]);
    // Level 1 accumulates segment increments; compare to the endpoint gap.
    EXPECT_NEAR(lvl[1], last[1] - p.point(0)[1], 1e-12);
  }
}

TEST(Signature, LengthFormula) {
  for (int k = 1; k <= 6; ++k) {
    const std::size_t want = (std::size_t{1} << (k + 1)) - 2;
    EXPECT_EQ(signature_length(2, k), want);
    const AugmentedPath p(2, {0, 1, 0.5, 2, 1, 0});
    EXPECT_EQ(signature(p, k).values.size(), want);
    EXPECT_EQ(signature_labels(2, k).size(), want);
  }
  EXPECT_EQ(signature_length(2, 3), 14u);
}

TEST(Signature, DepthCap) {
  const AugmentedPath p(2, {0, 1, 1, 2});
  try {
    signature(p, 14);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DepthTooLarge);
  }
  EXPECT_NO_THROW(signature(p, 12));
  EXPECT_THROW(signature(p, 0), Error);
}

TEST(Signature, MatchesNestedQuadrature) {
  Rng rng(2);
  for (int trial = 0; trial < 25; ++trial) {
    const auto p = random_path(rng, 3 + rng.index(10));
    const auto s = signature(p, 3).values;
    const auto q = oracle::quadrature_signature(p, 3);
    ASSERT_EQ(s.size(), q.size());
    for (std::size_t k = 0; k < s.size(); ++k) EXPECT_LT(std::abs(s[k] - q[k]), 1e-6 * std::max(std::abs(q[k]), 1e-12));
  }
}

TEST(Signature, ChenSplitConsistency) {
  Rng rng(3);
  for (int trial = 0; trial < 25; ++trial) {
    const auto p = random_path(rng, 4 + rng.index(12));
    const std::size_t cut = 1 + rng.index(p.size() - 2);
    for (int depth : {2, 3, 4}) {
      const auto whole = signature(p, depth).values;
      const auto joined = chen_product(signature(p.slice(0, cut), depth), signature(p.slice(cut, p.size() - 1), depth));
      for (std::size_t k = 0; k < whole.size(); ++k) EXPECT_NEAR(joined.values[k], whole[k], 1e-10);
    }
  }
}

TEST(Signature, ReparameterizationInvariance) {
  Rng rng(4);
  const auto p = random_path(rng, 8);
  // Insert a midpoint on every segment: same image, different sampling.
  std::vector<double> dense;
  for (std::size_t i = 0; i + 1 < p.size(); ++i) {
    const auto a = p.point(i);
    const auto b = p.point(i + 1);
    dense.insert(dense.end(), {a[0], a[1], a[0] + 0.3 * (b[0] - a[0]), a[1] + 0.3 * (b[1] - a[1])});
  }
  const auto end = p.point(p.size() - 1);
  dense.insert(dense.end(), {end[0], end[1]});
  const auto s1 = signature(p, 4).values;
  const auto s2 = signature(AugmentedPath(2, dense), 4).values;
  for (std::size_t k = 0; k < s1.size(); ++k) EXPECT_NEAR(s1[k], s2[k], 1e-9);
}

TEST(Featurize, PicksPhaseAndIsPure) {
  const AugmentedPath c(2, {0, 3.0, 1, 4.0});
  const AugmentedPath d(2, {0, 4.0, 0.5, 3.5, 1, 3.0});
  EXPECT_EQ(featurize(c, d, Phase::Discharge, 3), signature(d, 3).values);
  EXPECT_EQ(featurize(c, d, Phase::Charge, 3), signature(c, 3).values);
  EXPECT_EQ(featurize(std::nullopt, d, Phase::Discharge, 3).size(), 14u);
  EXPECT_EQ(featurize(c, d, Phase::Discharge, 3), featurize(c, d, Phase::Discharge, 3));
  EXPECT_THROW(featurize(std::nullopt, d, Phase::Charge, 3), Error);
}

TEST(Signature, LabelsFollowLexicographicOrder) {
  EXPECT_EQ(signature_labels(2, 2), (std::vector<std::string>{"S1", "S2", "S1_1", "S1_2", "S2_1", "S2_2"}));
}

TEST(AugmentedPath, RejectsNonIncreasingTime) {
  EXPECT_THROW(AugmentedPath(2, {0, 0, 0, 1}), Error);
  EXPECT_THROW(AugmentedPath(2, {0, 0, 1}), Error);
  EXPECT_THROW(polyline_signature(2, std::vector<double>{0, 0}, 2), Error);
}
