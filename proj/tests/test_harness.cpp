#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <gtest/gtest.h>

#include "nfloc/harness.hpp"
#include "test_support.hpp"

using namespace nfloc;

namespace {

ScenarioConfig tiny(std::uint64_t seed = 1) {
  ScenarioConfig c = fixtures::small_config(seed, 5, 8, 2, 1e9);
  c.solver.max_outer_iters = 200;
  return c;
}

template <class Rows, class Writer>
std::string csv(const Rows& rows, Writer w) {
  std::ostringstream os;
  w(os, rows);
  return os.str();
}

}  // namespace

TEST(Config, ParsesEverySection) {
  std::istringstream in(R"(
; comment
[anchors]
count = 4
radius_m = 30
velocity_mode = distinct
[receiver]
center_m = 1, 2, 3
orientation = 0,0,2
[array]
num_elements = 12
[slots]
num_slots = 3
slot_spacing_s = 0.25
[waveform]
carrier_hz = 2e9
rolloff = 0.5
[noise]
snr_db = 5
offset_convention = first_element
[seed]
value = 42
[solver]
direction = steepest_descent
multi_start = 2
[initializer]
index_set_size = 6
)");
  const ScenarioConfig c = parse_config(in);
  EXPECT_EQ(c.num_anchors, 4);
  EXPECT_EQ(c.anchor_radius, 30.0);
  EXPECT_EQ(c.anchor_velocity_mode, AnchorVelocityMode::kDistinct);
  EXPECT_EQ(c.center, Vec3(1, 2, 3));
  ASSERT_TRUE(c.orientation.has_value());
  EXPECT_EQ(c.num_elements, 12);
  EXPECT_EQ(c.num_slots, 3);
  EXPECT_EQ(c.slot_spacing, 0.25);
  EXPECT_EQ(c.carrier_frequency, 2e9);
  EXPECT_EQ(c.rolloff, 0.5);
  EXPECT_EQ(c.snr_db, 5.0);
  EXPECT_EQ(c.offset_convention, OffsetConvention::kFirstElement);
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.solver.direction, BlockDirection::kSteepestDescent);
  EXPECT_EQ(c.solver.multi_start, 2);
  EXPECT_EQ(c.index_set_size, 6);
}

TEST(Config, RejectsUnknownOrMalformedInput) {
  std::istringstream a("[anchors]\ncolour = red\n");
  EXPECT_THROW(parse_config(a), ConfigurationError);
  std::istringstream b("[nonsense]\nx = 1\n");
  EXPECT_THROW(parse_config(b), ConfigurationError);
  std::istringstream c("[receiver]\ncenter_m = 1,2\n");
  EXPECT_THROW(parse_config(c), ConfigurationError);
  std::istringstream d("[array]\nnum_elements = ten\n");
  EXPECT_THROW(parse_config(d), ConfigurationError);
  std::istringstream e("[array]\nnum_elements = 0\n");
  EXPECT_THROW(parse_config(e), ConfigurationError);
  EXPECT_THROW(config_from_overrides({"anchors.count"}), ConfigurationError);
  EXPECT_THROW(config_from_overrides({"count=3"}), ConfigurationError);
  EXPECT_THROW(load_config("/nonexistent/file.ini"), ConfigurationError);
}

TEST(Config, OverridesWinOverTheFile) {
  std::istringstream in("[anchors]\ncount = 4\n");
  const ScenarioConfig c = parse_config(in, {"anchors.count=7", "noise.snr_db=-3"});
  EXPECT_EQ(c.num_anchors, 7);
  EXPECT_EQ(c.snr_db, -3.0);
}

TEST(Config, CanonicalFormRoundTripsAndHashes) {
  ScenarioConfig c = config_from_overrides({"anchors.count=6", "receiver.velocity_mps=1,0,0", "waveform.carrier_hz=3e9"});
  std::istringstream in(canonical_config(c));
  const ScenarioConfig back = parse_config(in);
  EXPECT_EQ(canonical_config(back), canonical_config(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
  EXPECT_EQ(config_hash(c).size(), 16u);
  c.snr_db += 1e-9;
  EXPECT_NE(config_hash(back), config_hash(c));
}

TEST(Sweep, ValidationAndParsing) {
  SweepSpec s;
  EXPECT_NO_THROW(s.validate());
  s.variable = SweepVariable::kNumElements;
  EXPECT_THROW(s.validate(), ConfigurationError);
  s.values = {16, 8};
  EXPECT_THROW(s.validate(), ConfigurationError);
  s.values = {8, 16};
  s.workers = 0;
  EXPECT_THROW(s.validate(), ConfigurationError);
  EXPECT_EQ(parse_sweep_variable("carrier_frequency"), SweepVariable::kCarrierFrequency);
  EXPECT_EQ(parse_study_mode("doppler_only"), StudyMode::kDopplerOnly);
  EXPECT_THROW(parse_sweep_variable("temperature"), ConfigurationError);
  EXPECT_THROW(apply_sweep_value(tiny(), SweepVariable::kNumAnchors, 2.5), ConfigurationError);
  EXPECT_EQ(apply_sweep_value(tiny(), SweepVariable::kSnr, -4).snr_db, -4.0);
  EXPECT_EQ(apply_sweep_value(tiny(), SweepVariable::kSlotSpacing, 0.3).slot_spacing, 0.3);
}

TEST(BoundsSweep, AnchorCountDecidesLocalizabilityWithOneSlot) {
  ScenarioConfig base = tiny();
  base.num_slots = 1;
  SweepSpec s;
  s.variable = SweepVariable::kNumAnchors;
  s.values = {1, 2, 3};
  const CampaignResult r = run_bounds_sweep(s, base);
  ASSERT_EQ(r.bounds.size(), 3u);
  EXPECT_FALSE(r.bounds[0].localizable);
  EXPECT_FALSE(r.bounds[1].localizable);
  EXPECT_TRUE(r.bounds[2].localizable);
  EXPECT_TRUE(std::isinf(r.bounds[0].peb));
  EXPECT_TRUE(std::isfinite(r.bounds[2].peb));
  EXPECT_TRUE(r.any_localizable());
}

TEST(BoundsSweep, SecondSlotRescuesTwoAnchors) {
  ScenarioConfig base = tiny();
  base.num_anchors = 2;
  SweepSpec s;
  s.variable = SweepVariable::kNumSlots;
  s.values = {1, 2, 3};
  const CampaignResult r = run_bounds_sweep(s, base);
  EXPECT_FALSE(r.bounds[0].localizable);
  EXPECT_TRUE(r.bounds[1].localizable);
  EXPECT_TRUE(r.bounds[2].localizable);
  EXPECT_LE(r.bounds[2].peb, r.bounds[1].peb);
}

TEST(BoundsSweep, EveryRowCarriesItsOwnHash) {
  SweepSpec s;
  s.variable = SweepVariable::kNumElements;
  s.values = {4, 8};
  s.seeds = {1, 2};
  const CampaignResult r = run_bounds_sweep(s, tiny());
  ASSERT_EQ(r.bounds.size(), 4u);
  EXPECT_NE(r.bounds[0].config_hash, r.bounds[2].config_hash);
  EXPECT_EQ(r.bounds[0].config_hash, config_hash(apply_sweep_value(tiny(1), SweepVariable::kNumElements, 4)));
  for (const auto& b : r.bounds) EXPECT_NEAR(b.peb * b.peb, b.peb_sq, 1e-12 * b.peb_sq);
}

TEST(TrialSeed, IndependentOfSweepValueAndDistinctAcrossTrials) {
  EXPECT_EQ(trial_seed(3, 0), trial_seed(3, 0));
  EXPECT_NE(trial_seed(3, 0), trial_seed(3, 1));
  EXPECT_NE(trial_seed(3, 0), trial_seed(4, 0));
  const TrialRow a = run_trial(apply_sweep_value(tiny(), SweepVariable::kSnr, 0), 0, 2);
  const TrialRow b = run_trial(apply_sweep_value(tiny(), SweepVariable::kSnr, 20), 20, 2);
  EXPECT_EQ(a.trial_seed, b.trial_seed);
}

TEST(Estimation, DeterministicAcrossWorkerCounts) {
  SweepSpec s;
  s.variable = SweepVariable::kSnr;
  s.values = {5, 15};
  s.trials_per_point = 4;
  s.mode = StudyMode::kFullEstimation;
  s.seeds = {1, 2};
  s.workers = 1;
  const CampaignResult one = run_estimation_campaign(s, tiny());
  s.workers = 3;
  const CampaignResult three = run_estimation_campaign(s, tiny());
  ASSERT_EQ(one.trials.size(), 16u);
  EXPECT_EQ(csv(one.trials, write_trials_csv), csv(three.trials, write_trials_csv));
  EXPECT_EQ(csv(one.aggregates, write_aggregates_csv), csv(three.aggregates, write_aggregates_csv));
  EXPECT_EQ(csv(one.bounds, write_bounds_csv), csv(three.bounds, write_bounds_csv));
  for (const auto& t : one.trials) EXPECT_EQ(t.status, TrialStatus::kOk);
}

TEST(Estimation, VerifyAcceptsFreshOutputAndCatchesTampering) {
  SweepSpec s;
  s.variable = SweepVariable::kNumElements;
  s.values = {8};
  s.trials_per_point = 3;
  s.mode = StudyMode::kFullEstimation;
  const CampaignResult r = run_estimation_campaign(s, tiny());
  const std::string trials = csv(r.trials, write_trials_csv);
  const std::string aggregates = csv(r.aggregates, write_aggregates_csv);
  {
    std::istringstream t(trials), a(aggregates);
    const VerifyReport v = verify(t, a);
    EXPECT_TRUE(v.ok);
    EXPECT_EQ(v.rows_checked, 1);
  }
  std::vector<TrialRow> rows = r.trials;
  rows[1].err_p *= 1.5;
  std::istringstream t(csv(rows, write_trials_csv)), a(aggregates);
  const VerifyReport v = verify(t, a);
  EXPECT_FALSE(v.ok);
  EXPECT_FALSE(v.mismatches.empty());
}

TEST(Csv, TrialsRoundTripExactly) {
  TrialRow r;
  r.config_hash = "0123456789abcdef";
  r.value = 0.1;
  r.seed = 7;
  r.trial = 3;
  r.trial_seed = 0xfedcba9876543210ULL;
  r.status = TrialStatus::kInitializerFailed;
  r.reason = "max_iters";
  r.cost = 1.0 / 3.0;
  r.err_p = std::nextafter(1.0, 2.0);
  r.err_o = 1e-300;
  const std::string text = csv(std::vector<TrialRow>{r}, write_trials_csv);
  EXPECT_EQ(text.rfind("# nfloc trials v1", 0), 0u);
  std::istringstream in(text);
  const std::vector<TrialRow> back = read_trials_csv(in);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].trial_seed, r.trial_seed);
  EXPECT_EQ(back[0].status, r.status);
  EXPECT_EQ(back[0].cost, r.cost);
  EXPECT_EQ(back[0].err_p, r.err_p);
  EXPECT_EQ(csv(back, write_trials_csv), text);
  std::istringstream bad("# nfloc trials v1\nwrong,header\n");
  EXPECT_THROW(read_trials_csv(bad), ConfigurationError);
}

TEST(Aggregate, RmseOverSuccessfulTrials) {
  BoundsRow b;
  b.value = 1.0;
  b.seed = 1;
  b.peb = 2.0;
  b.veb = 1.0;
  b.oeb = 0.5;
  std::vector<TrialRow> t(3);
  for (auto& r : t) {
    r.value = 1.0;
    r.seed = 1;
  }
  t[0].err_p = 3.0;
  t[0].converged = true;
  t[1].err_p = 4.0;
  t[2].status = TrialStatus::kInitializerFailed;
  t[2].err_p = 1e6;
  const std::vector<AggregateRow> a = aggregate(t, {b});
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a[0].trials, 3);
  EXPECT_EQ(a[0].ok_trials, 2);
  EXPECT_NEAR(a[0].rmse_p, std::sqrt(12.5), 1e-15);
  EXPECT_NEAR(a[0].ratio_p, std::sqrt(12.5) / 2.0, 1e-15);
  EXPECT_NEAR(a[0].convergence_rate, 1.0 / 3.0, 1e-15);
}

TEST(ParallelFor, FillsEverySlotAndRethrowsLowestFailure) {
  std::vector<int> out(100, -1);
  parallel_for(100, 4, [&](int i) { out[i] = i * i; });
  for (int i = 0; i < 100; ++i) EXPECT_EQ(out[i], i * i);
  std::atomic<int> ran{0};
  try {
    parallel_for(50, 3, [&](int i) {
      ++ran;
      if (i == 7 || i == 30) throw std::runtime_error("task " + std::to_string(i));
    });
    FAIL() << "expected an exception";
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "task 7");
  }
  EXPECT_EQ(ran.load(), 50);
}
