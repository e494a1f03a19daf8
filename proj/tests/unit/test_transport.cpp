#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "fixtures.hpp"
#include "tfo/errors.hpp"
#include "tfo/replay.hpp"
#include "tfo/transport.hpp"

using namespace tfo;

namespace {

/// Straightforward event-by-event photon walk written from the textbook formulas:
/// Fresnel from the s/p amplitude coefficients, Henyey-Greenstein by inversion,
/// MCML direction update. Uses the same random-number addressing as simulate().
struct Reference {
  const TissueModel& m;
  std::size_t w;
  std::uint64_t seed;

  static double fresnel_r(double n1, double n2, double ci, double* ct_out) {
    const double si = std::sqrt(std::max(0.0, 1.0 - ci * ci));
    const double st = n1 / n2 * si;
    if (st >= 1.0) {
      *ct_out = 0.0;
      return 1.0;
    }
    const double ct = std::sqrt(1.0 - st * st);
    *ct_out = ct;
    const double rs = (n1 * ci - n2 * ct) / (n1 * ci + n2 * ct);
    const double rp = (n2 * ci - n1 * ct) / (n2 * ci + n1 * ct);
    return 0.5 * (rs * rs + rp * rp);
  }

  bool run(std::uint64_t i, PhotonRecord& rec) const {
    RngStream rng(seed, i, rng_domain::kTransport);
    const double n0 = m.layers[0].optics[w].n;
    const double r0 = (n0 - 1.0) / (n0 + 1.0);
    if (rng.uniform() < r0 * r0) return false;

    double x = m.source.x_mm, y = m.source.y_mm, z = 0.0;
    double ux = 0.0, uy = 0.0, uz = 1.0;
    int layer = 0;
    std::array<double, kNumLayers> L{};
    double total = 0.0;
    const double H = m.lateral_half_width_mm;

    while (true) {
      double tau = -std::log(rng.uniform());
      while (true) {
        const auto& op = m.layers[layer].optics[w];
        const double s_scatter = op.mu_s > 0.0 ? tau / op.mu_s : INFINITY;
        double s_z = INFINITY;
        if (uz > 0) s_z = std::max(0.0, (m.layer_bottom(layer) - z) / uz);
        if (uz < 0) s_z = std::max(0.0, (m.layer_top(layer) - z) / uz);
        double s_side = INFINITY;
        if (ux != 0) s_side = std::min(s_side, ((ux > 0 ? H : -H) - x) / ux);
        if (uy != 0) s_side = std::min(s_side, ((uy > 0 ? H : -H) - y) / uy);
        s_side = std::max(0.0, s_side);

        if (s_scatter <= s_z && s_scatter <= s_side) {
          x += s_scatter * ux;
          y += s_scatter * uy;
          z += s_scatter * uz;
          L[layer] += s_scatter;
          total += s_scatter;
          if (total > m.path_cutoff_mm()) return false;
          break;
        }
        if (s_side < s_z) return false;
        x += s_z * ux;
        y += s_z * uy;
        z += s_z * uz;
        L[layer] += s_z;
        total += s_z;
        if (total > m.path_cutoff_mm()) return false;
        if (op.mu_s > 0.0) tau -= s_z * op.mu_s;

        const bool down = uz > 0;
        z = down ? m.layer_bottom(layer) : m.layer_top(layer);
        if (down && layer == 3) return false;
        const bool top = !down && layer == 0;
        const double n1 = op.n;
        const double n2 = top ? 1.0 : m.layers[down ? layer + 1 : layer - 1].optics[w].n;
        double ct = std::abs(uz);
        const double R = n1 == n2 ? 0.0 : fresnel_r(n1, n2, std::abs(uz), &ct);
        if (rng.uniform() < R) {
          uz = -uz;
          continue;
        }
        if (top) {
          const double r = std::hypot(x - m.source.x_mm, y - m.source.y_mm);
          for (std::size_t k = 0; k < m.rings.size(); ++k) {
            if (std::abs(r - m.rings[k].sdd_mm) <= m.rings[k].half_width_mm) {
              rec.photon_index = i;
              rec.detector_id = static_cast<std::int32_t>(k);
              rec.pathlength = L;
              return true;
            }
          }
          return false;
        }
        if (n1 != n2) {
          ux *= n1 / n2;
          uy *= n1 / n2;
          uz = down ? ct : -ct;
        }
        layer += down ? 1 : -1;
      }
      const double g = m.layers[layer].optics[w].g;
      const double u1 = rng.uniform();
      const double u2 = rng.uniform();
      double ct;
      if (g == 0.0) {
        ct = 2.0 * u1 - 1.0;
      } else {
        const double f = (1.0 - g * g) / (1.0 - g + 2.0 * g * u1);
        ct = (1.0 + g * g - f * f) / (2.0 * g);
      }
      const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
      const double phi = 2.0 * std::numbers::pi * u2;
      double nx, ny, nz;
      if (std::abs(uz) > 0.99999) {
        nx = st * std::cos(phi);
        ny = st * std::sin(phi);
        nz = uz > 0 ? ct : -ct;
      } else {
        const double t = std::sqrt(1.0 - uz * uz);
        nx = st * (ux * uz * std::cos(phi) - uy * std::sin(phi)) / t + ux * ct;
        ny = st * (uy * uz * std::cos(phi) + ux * std::sin(phi)) / t + uy * ct;
        nz = -st * std::cos(phi) * t + uz * ct;
      }
      const double nn = std::sqrt(nx * nx + ny * ny + nz * nz);
      ux = nx / nn;
      uy = ny / nn;
      uz = nz / nn;
    }
  }
};

}  // namespace

TEST(FreePath, ClosedFormAndLimits) {
  EXPECT_NEAR(sample_free_path(10.0, std::exp(-1.0)), 0.1, 1e-15);
  EXPECT_LT(sample_free_path(10.0, 1.0 - 1e-12), 1e-11);
  EXPECT_TRUE(std::isinf(sample_free_path(0.0, 0.5)));
  EXPECT_THROW(sample_free_path(1.0, 0.0), DomainError);
}

TEST(FreePath, EmpiricalMeanMatchesInverseMuS) {
  RngStream rng(1, 1);
  const int n = 1000000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += sample_free_path(4.0, rng.uniform());
  EXPECT_NEAR(sum / n, 0.25, 0.0025);
}

TEST(ScatterDirection, IsotropicCosineClosedForm) {
  for (double u : {0.0, 0.1, 0.5, 0.93}) EXPECT_DOUBLE_EQ(sample_hg_cosine(0.0, u), 2.0 * u - 1.0);
}

TEST(ScatterDirection, HenyeyGreensteinMeanCosineEqualsG) {
  RngStream rng(3, 3);
  const int n = 1000000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += sample_hg_cosine(0.9, rng.uniform());
  EXPECT_NEAR(sum / n, 0.9, 0.003);
}

TEST(ScatterDirection, OutputIsUnitLengthAndDeflectionMatches) {
  RngStream rng(4, 4);
  Vec3 d{0.0, 0.0, 1.0};
  for (int i = 0; i < 10000; ++i) {
    const double u1 = rng.uniform();
    const Vec3 out = sample_scatter_direction(0.7, u1, rng.uniform(), d);
    const double norm = std::sqrt(out.x * out.x + out.y * out.y + out.z * out.z);
    ASSERT_NEAR(norm, 1.0, 1e-12);
    ASSERT_NEAR(out.x * d.x + out.y * d.y + out.z * d.z, sample_hg_cosine(0.7, u1), 1e-9);
    d = out;
  }
}

TEST(Fresnel, NormalIncidenceAndTotalInternalReflection) {
  const auto r = fresnel(1.0, 1.4, 1.0);
  EXPECT_NEAR(r.reflectance, std::pow(0.4 / 2.4, 2), 1e-15);
  EXPECT_EQ(fresnel(1.4, 1.0, 0.3).reflectance, 1.0);
  EXPECT_EQ(fresnel(1.4, 1.4, 0.3).reflectance, 0.0);
  double ct = 0.0;
  EXPECT_NEAR(fresnel(1.4, 1.33, 0.6).reflectance, Reference::fresnel_r(1.4, 1.33, 0.6, &ct), 1e-14);
  EXPECT_NEAR(fresnel(1.4, 1.33, 0.6).cos_transmit, ct, 1e-14);
}

TEST(Simulate, NoScatteringMeansNoDetection) {
  auto m = fixtures::tiny_model();
  for (auto& l : m.layers)
    for (auto& op : l.optics) op.mu_s = 0.0;
  const auto t = simulate(m, 735.0, 2000, 1, {1});
  EXPECT_TRUE(t.rows.empty());
  for (auto c : t.ring_counts) EXPECT_EQ(c, 0u);
}

TEST(Simulate, MatchesScalarReferenceWalk) {
  const auto m = fixtures::tiny_model();
  for (double wl : {735.0, 850.0}) {
    const auto t = simulate(m, wl, 1000, 77, {1});
    Reference ref{m, m.wavelength_index(wl), 77};
    std::vector<PhotonRecord> expected;
    for (std::uint64_t i = 0; i < 1000; ++i) {
      PhotonRecord rec;
      if (ref.run(i, rec)) expected.push_back(rec);
    }
    ASSERT_GT(expected.size(), 20u);
    ASSERT_EQ(t.rows.size(), expected.size());
    std::vector<std::uint64_t> counts(m.rings.size(), 0);
    for (std::size_t k = 0; k < expected.size(); ++k) {
      EXPECT_EQ(t.rows[k].photon_index, expected[k].photon_index);
      EXPECT_EQ(t.rows[k].detector_id, expected[k].detector_id);
      for (std::size_t j = 0; j < kNumLayers; ++j)
        EXPECT_NEAR(t.rows[k].pathlength[j], expected[k].pathlength[j], 1e-9 * (1.0 + expected[k].pathlength[j]));
      ++counts[expected[k].detector_id];
    }
    EXPECT_EQ(t.ring_counts, counts);
  }
}

TEST(Simulate, WorkerCountDoesNotChangeTable) {
  const auto m = fixtures::tiny_model();
  const auto a = simulate(m, 735.0, 20000, 5, {1});
  const auto b = simulate(m, 735.0, 20000, 5, {8});
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t k = 0; k < a.rows.size(); ++k) {
    ASSERT_EQ(a.rows[k].photon_index, b.rows[k].photon_index);
    ASSERT_EQ(a.rows[k].detector_id, b.rows[k].detector_id);
    ASSERT_EQ(a.rows[k].pathlength, b.rows[k].pathlength);
  }
  EXPECT_EQ(a.ring_counts, b.ring_counts);
  EXPECT_EQ(a.direct_tally, b.direct_tally);
}

TEST(Simulate, TableInvariants) {
  const auto m = fixtures::tiny_model();
  const auto t = simulate(m, 735.0, 20000, 11, {2});
  EXPECT_EQ(t.meta.n_launched, 20000u);
  EXPECT_EQ(t.meta.model_hash, m.hash());
  EXPECT_LE(t.rows.size(), 20000u);
  std::uint64_t prev = 0;
  std::size_t sensitive = 0;
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    const auto& r = t.rows[k];
    if (k > 0) EXPECT_GT(r.photon_index, prev);
    prev = r.photon_index;
    EXPECT_GT(r.pathlength[0], 0.0);
    for (double l : r.pathlength) EXPECT_GE(l, 0.0);
    sensitive += r.fetal_sensitive();
  }
  EXPECT_GT(sensitive, 0u);
  const auto i0 = replay_intensity(t, {0, 0, 0, 0});
  double sum = 0.0;
  for (double v : i0) sum += v;
  EXPECT_LE(sum, 1.0);
}

TEST(PathlengthStats, IdenticalRowsAndSmallFixture) {
  PathlengthTable t;
  t.meta.rings = {{1.0, 0.5}};
  t.ring_counts = {4};
  for (int i = 0; i < 4; ++i) t.rows.push_back({static_cast<std::uint64_t>(i), 0, {1.0 + i, 0.0, 0.0, 0.0}});
  const auto s = pathlength_stats(t, 0);
  EXPECT_DOUBLE_EQ(s.total.median, 2.5);
  EXPECT_DOUBLE_EQ(s.total.mean, 2.5);
  EXPECT_DOUBLE_EQ(s.total.min, 1.0);
  EXPECT_DOUBLE_EQ(s.total.max, 4.0);

  for (auto& r : t.rows) r.pathlength = {2.0, 0.0, 0.0, 1.0};
  const auto c = pathlength_stats(t, 0);
  for (double v : {c.total.q1, c.total.median, c.total.q3, c.total.mean}) EXPECT_DOUBLE_EQ(v, 3.0);
  EXPECT_DOUBLE_EQ(c.fetal.mean, 1.0);
}

TEST(PathlengthStats, MatchesSortBasedQuantiles) {
  const auto t = fixtures::random_table(501, 3, 8);
  const auto s = pathlength_stats(t, 1);
  std::vector<double> v;
  for (const auto& r : t.rows)
    if (r.detector_id == 1) v.push_back(r.total());
  std::sort(v.begin(), v.end());
  auto q = [&](double p) {
    const double pos = p * (v.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    return v[lo] + (pos - lo) * (v[std::min(lo + 1, v.size() - 1)] - v[lo]);
  };
  EXPECT_DOUBLE_EQ(s.total.q1, q(0.25));
  EXPECT_DOUBLE_EQ(s.total.median, q(0.5));
  EXPECT_DOUBLE_EQ(s.total.q3, q(0.75));
  EXPECT_EQ(s.n, v.size());
}

TEST(PathlengthStats, EmptyRingIsAnError) {
  PathlengthTable t;
  t.meta.rings = {{1.0, 0.5}};
  t.ring_counts = {0};
  EXPECT_THROW(pathlength_stats(t, 0), DataError);
}
