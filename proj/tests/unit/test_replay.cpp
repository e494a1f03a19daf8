#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "tfo/errors.hpp"
#include "tfo/replay.hpp"

using namespace tfo;

namespace {

std::vector<double> naive_intensity(const PathlengthTable& t, const AbsorptionVector& mu, bool fetal_only) {
  std::vector<double> out(t.n_rings(), 0.0);
  for (const auto& r : t.rows) {
    if (fetal_only && !(r.pathlength[3] > 0.0)) continue;
    double s = 0.0;
    for (std::size_t j = 0; j < kNumLayers; ++j) s += mu[j] * r.pathlength[j];
    out[r.detector_id] += std::exp(-s);
  }
  for (double& v : out) v /= static_cast<double>(t.meta.n_launched);
  return out;
}

}  // namespace

TEST(Replay, ZeroAbsorptionGivesDetectedFraction) {
  const auto t = fixtures::random_table(300, 4, 1);
  const auto i = replay_intensity(t, {0, 0, 0, 0});
  for (std::size_t r = 0; r < 4; ++r)
    EXPECT_DOUBLE_EQ(i[r], static_cast<double>(t.ring_counts[r]) / t.meta.n_launched);
}

TEST(Replay, SinglePhotonClosedForm) {
  PathlengthTable t;
  t.meta.n_launched = 1;
  t.meta.rings = {{1.0, 0.5}};
  t.ring_counts = {1};
  t.rows.push_back({0, 0, {1.0, 0.0, 0.0, 0.0}});
  EXPECT_NEAR(replay_intensity(t, {0.5, 0, 0, 0})[0], 0.60653, 1e-5);
}

TEST(Replay, MatchesNaiveRecomputation) {
  const auto t = fixtures::random_table(100, 3, 2);
  const AbsorptionVector mu{0.01, 0.02, 0.003, 0.015};
  const auto a = replay_intensity(t, mu);
  const auto b = naive_intensity(t, mu, false);
  for (std::size_t r = 0; r < 3; ++r) EXPECT_NEAR(a[r], b[r], 1e-12 * b[r]);
}

TEST(Replay, NegativeAbsorptionIsDomainError) {
  const auto t = fixtures::random_table(10, 2, 3);
  EXPECT_THROW(replay_intensity(t, {-0.1, 0, 0, 0}), DomainError);
}

TEST(Replay, EqualsDirectTallyAtGeneratingAbsorption) {
  const auto m = fixtures::tiny_model();
  const auto t = simulate(m, 735.0, 20000, 21, {3});
  const auto i = replay_intensity(t, t.meta.generating_mu_a);
  for (std::size_t r = 0; r < t.n_rings(); ++r) {
    if (t.ring_empty(r)) continue;
    EXPECT_NEAR(i[r], t.direct_tally[r], 1e-12 * t.direct_tally[r]);
  }
}

TEST(Replay, StrictlyDecreasingAndLogConvex) {
  const auto t = fixtures::random_table(400, 2, 4);
  RngStream rng(4, 1);
  for (int trial = 0; trial < 200; ++trial) {
    AbsorptionVector mu0, d;
    for (std::size_t j = 0; j < kNumLayers; ++j) {
      mu0[j] = 0.05 * rng.uniform();
      d[j] = 0.05 * rng.uniform();
    }
    const auto f = [&](double s) {
      AbsorptionVector mu;
      for (std::size_t j = 0; j < kNumLayers; ++j) mu[j] = mu0[j] + s * d[j];
      return replay_intensity(t, mu);
    };
    const auto a = f(0.0), m = f(0.5), b = f(1.0);
    for (std::size_t r = 0; r < 2; ++r) {
      EXPECT_LT(b[r], a[r]);
      EXPECT_LE(std::log(m[r]), 0.5 * (std::log(a[r]) + std::log(b[r])) + 1e-12);
    }
  }
}

TEST(FetalSensitivity, HandComputedTwoPhotonTable) {
  PathlengthTable t;
  t.meta.n_launched = 2;
  t.meta.rings = {{1.0, 0.5}};
  t.ring_counts = {2};
  t.rows.push_back({0, 0, {1.0, 0.0, 0.0, 1.0}});
  t.rows.push_back({1, 0, {2.0, 0.0, 0.0, 0.0}});
  EXPECT_DOUBLE_EQ(fetal_sensitivity(t, {0, 0, 0, 0})[0], 0.25);
}

TEST(FetalSensitivity, LimitsAndRange) {
  PathlengthTable t;
  t.meta.n_launched = 2;
  t.meta.rings = {{1.0, 0.5}};
  t.ring_counts = {2};
  t.rows.push_back({0, 0, {1.0, 0.0, 0.0, 0.0}});
  t.rows.push_back({1, 0, {2.0, 1.0, 0.0, 0.0}});
  EXPECT_DOUBLE_EQ(fetal_sensitivity(t, {0, 0, 0, 0})[0], 0.0);
  for (auto& r : t.rows) {
    r.pathlength[0] = 0.0;
    r.pathlength[3] = 1.0;
  }
  EXPECT_DOUBLE_EQ(fetal_sensitivity(t, {0, 0, 0, 0})[0], 1.0);

  const auto u = fixtures::random_table(500, 3, 6);
  for (double s : fetal_sensitivity(u, {0.01, 0.01, 0.01, 0.02})) {
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
}

TEST(FetalSensitiveIntensity, PartitionIdentity) {
  const auto t = fixtures::random_table(300, 3, 7);
  const AbsorptionVector mu{0.02, 0.01, 0.0, 0.03};
  const auto total = replay_intensity(t, mu);
  const auto fetal = fetal_sensitive_intensity(t, mu);
  const auto naive_fetal = naive_intensity(t, mu, true);
  PathlengthTable insensitive = t;
  std::erase_if(insensitive.rows, [](const PhotonRecord& r) { return r.fetal_sensitive(); });
  const auto rest = replay_intensity(insensitive, mu);
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_NEAR(fetal[r], naive_fetal[r], 1e-12 * naive_fetal[r]);
    EXPECT_NEAR(fetal[r], total[r] - rest[r], 1e-12 * total[r]);
    EXPECT_LE(fetal[r], total[r]);
  }
}

TEST(FetalSensitiveIntensity, AllOrNothing) {
  auto t = fixtures::random_table(100, 2, 8);
  for (auto& r : t.rows) r.pathlength[3] = 0.0;
  for (double v : fetal_sensitive_intensity(t, {0.01, 0, 0, 0})) EXPECT_EQ(v, 0.0);
  for (auto& r : t.rows) r.pathlength[3] = 2.0;
  EXPECT_EQ(fetal_sensitive_intensity(t, {0.01, 0, 0, 0.02}), replay_intensity(t, {0.01, 0, 0, 0.02}));
}

TEST(SweepKernel, CombineMatchesReplay) {
  const auto t = fixtures::random_table(300, 3, 9);
  SweepKernel k(t, {0, 2}, 0.02, 0.003);
  const auto i = k.combine(k.maternal_factors(0.015), k.fetal_factors(0.025));
  const auto ref = replay_intensity(t, {0.015, 0.02, 0.003, 0.025});
  EXPECT_NEAR(i[0], ref[0], 1e-12 * ref[0]);
  EXPECT_NEAR(i[1], ref[2], 1e-12 * ref[2]);
}
