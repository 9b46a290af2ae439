#include <cmath>

#include <gtest/gtest.h>

#include "nfloc/channel.hpp"
#include "nfloc/initializer.hpp"
#include "test_support.hpp"

using namespace nfloc;

namespace {

BuiltScenario zero_offset_scenario(std::uint64_t seed, int anchors, int slots) {
  ScenarioConfig c = fixtures::small_config(seed, anchors, 32, slots, 1e9);
  c.clock_offset_sd = 0.0;
  c.frequency_offset_sd = 0.0;
  return build_scenario(c);
}

MeasurementSet clean(const Scenario& s) { return noiseless(compute_channel(s), NoiseSigmas{1e-11, 1.0}); }

ElementFixes true_fixes(const Scenario& s, const std::vector<int>& set) {
  ElementFixes f;
  for (int k = 0; k < s.slots.num_slots; ++k)
    for (int i : set) f[{i, k}] = element_position(s.receiver, s.array, s.slots, i, k);
  return f;
}

}  // namespace

TEST(IndexSet, EquallySpacedIncludingEnds) {
  const auto s = default_index_set(100, 8);
  ASSERT_EQ(s.size(), 8u);
  EXPECT_EQ(s.front(), 0);
  EXPECT_EQ(s.back(), 99);
  EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
  EXPECT_EQ(default_index_set(3, 8).size(), 3u);
}

TEST(TdoaFix, ExactWithFiveAndFourAnchors) {
  for (int nb : {4, 5, 7}) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const BuiltScenario b = zero_offset_scenario(seed, nb, 1);
      const Scenario& s = b.scenario;
      const ChannelParams ch = compute_channel(s);
      std::vector<Vec3> anchors;
      for (const Anchor& a : s.anchors) anchors.push_back(a.position(0, s.slots.slot_spacing));
      for (int u : {0, 13, 31}) {
        std::vector<double> delays;
        for (int a = 0; a < nb; ++a) delays.push_back(ch.delay[ch.index(a, u, 0)] + 3e-6);  // common epoch
        const Vec3 truth = element_position(s.receiver, s.array, s.slots, u, 0);
        EXPECT_LE((tdoa_element_fix(delays, anchors) - truth).norm(), 1e-6) << "nb " << nb << " seed " << seed;
      }
    }
  }
}

TEST(TdoaFix, NeedsFourAnchors) {
  const std::vector<double> d{1e-7, 2e-7, 3e-7};
  const std::vector<Vec3> a{Vec3(10, 0, 0), Vec3(0, 10, 0), Vec3(0, 0, 10)};
  EXPECT_THROW(tdoa_element_fix(d, a), InitializerFailure);
}

TEST(TdoaFix, CoplanarAnchorsAreIllConditioned) {
  const std::vector<Vec3> a{Vec3(0, 0, 0), Vec3(10, 0, 0), Vec3(0, 10, 0), Vec3(10, 10, 0), Vec3(5, 3, 0)};
  const Vec3 x(1, 2, 3);
  std::vector<double> d;
  for (const Vec3& p : a) d.push_back((p - x).norm() / kSpeedOfLight);
  EXPECT_THROW(tdoa_element_fix(d, a), InitializerFailure);
}

TEST(GeometricSteps, ExactFromTrueFixes) {
  const BuiltScenario b = zero_offset_scenario(3, 5, 3);
  const Scenario& s = b.scenario;
  const auto set = default_index_set(s.array.num_elements, 8);
  const ElementFixes f = true_fixes(s, set);
  const Vec3 o = orientation_init(f, set, s.slots.num_slots);
  EXPECT_LE((o - s.receiver.orientation).norm(), 1e-12);
  const Vec3 v = velocity_init_from_fixes(f, set, s.slots);
  EXPECT_LE((v - s.receiver.velocity).norm(), 1e-10);
  const Vec3 p = position_init(f, set, v, o, s.array, s.slots);
  EXPECT_LE((p - s.receiver.position0).norm(), 1e-10);
  // A reversed index order still yields the low-to-high axis.
  std::vector<int> rev(set.rbegin(), set.rend());
  EXPECT_LE((orientation_init(f, rev, s.slots.num_slots) - s.receiver.orientation).norm(), 1e-12);
}

TEST(GeometricSteps, DopplerVelocityFromOneSnapshot) {
  const BuiltScenario b = zero_offset_scenario(4, 5, 1);
  const Scenario& s = b.scenario;
  const auto set = default_index_set(s.array.num_elements, 8);
  const Vec3 v = velocity_init_from_doppler(clean(s), s, true_fixes(s, set), set);
  EXPECT_LE((v - s.receiver.velocity).norm(), 1e-5);
  EXPECT_THROW(velocity_init_from_fixes(true_fixes(s, set), set, s.slots), InitializerFailure);
}

TEST(OffsetInit, MeanResidualsRecoverOffsets) {
  const BuiltScenario b = fixtures::small_scenario(5, 5, 8, 2, 1e9);
  const Scenario& s = b.scenario;
  const auto [clock, freq] = offset_init(clean(s), s, s.receiver);
  for (int a = 0; a < s.num_anchors(); ++a) {
    EXPECT_NEAR(clock[a], s.anchors[a].clock_offset, 1e-18);
    EXPECT_NEAR(freq[a], s.anchors[a].frequency_offset, 1e-6);
  }
}

TEST(Initialize, NoiseFreeZeroOffsetsIsExact) {
  for (int slots : {1, 2}) {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
      const BuiltScenario b = zero_offset_scenario(seed, 5, slots);
      const Scenario& s = b.scenario;
      const InitEstimate e = initialize(clean(s), s);
      EXPECT_LE((e.position0 - s.receiver.position0).norm(), 1e-6);
      EXPECT_LE((e.velocity - s.receiver.velocity).norm(), 1e-5);
      EXPECT_LE((e.orientation - s.receiver.orientation).norm(), 1e-8);
      EXPECT_NEAR(e.orientation.norm(), 1.0, 1e-12);
      EXPECT_FALSE(e.used_grid_fallback);
      EXPECT_EQ(e.element_fixes.size(), e.index_set.size() * slots);
    }
  }
}

TEST(Initialize, HandoffContractWithOffsetsAndNoise) {
  const BuiltScenario b = fixtures::small_scenario(6, 5, 32, 2, 1e9);
  const Scenario& s = b.scenario;
  const ChannelParams ch = compute_channel(s);
  const MeasurementSet m = sample(ch, NoiseSigmas{4e-11, 1.6e3}, 11);
  const InitEstimate e = initialize(m, s);
  EXPECT_NEAR(e.orientation.norm(), 1.0, 1e-12);
  EXPECT_TRUE(e.position0.allFinite() && e.velocity.allFinite());
  ASSERT_EQ(e.clock_offset.size(), 5u);
  for (double d : e.clock_offset) EXPECT_LT(std::abs(d), 1e-3);
  // Unequal clock offsets bias the TDoA fixes, but by metres, not kilometres.
  EXPECT_LT((e.position0 - s.receiver.position0).norm(), 20.0);
}

TEST(Initialize, FewAnchorsUsesGridOrFails) {
  const BuiltScenario b = zero_offset_scenario(2, 3, 1);
  const Scenario& s = b.scenario;
  InitializerConfig cfg;
  cfg.grid_points_per_axis = 5;
  cfg.grid_directions = 8;
  const InitEstimate e = initialize(clean(s), s, cfg);
  EXPECT_TRUE(e.used_grid_fallback);
  EXPECT_NEAR(e.orientation.norm(), 1.0, 1e-12);
  cfg.allow_grid_fallback = false;
  EXPECT_THROW(initialize(clean(s), s, cfg), InitializerFailure);
}

TEST(Initialize, RejectsBadIndexSets) {
  const BuiltScenario b = zero_offset_scenario(1, 5, 1);
  InitializerConfig cfg;
  cfg.index_set = {3};
  EXPECT_THROW(initialize(clean(b.scenario), b.scenario, cfg), InitializerFailure);
  cfg.index_set = {0, 99};
  EXPECT_THROW(initialize(clean(b.scenario), b.scenario, cfg), ContractViolation);
}
