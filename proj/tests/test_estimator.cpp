#include <algorithm>
#include <array>
#include <cmath>

#include <gtest/gtest.h>

#include "nfloc/channel.hpp"
#include "nfloc/estimator.hpp"
#include "nfloc/fisher.hpp"
#include "nfloc/random.hpp"
#include "test_support.hpp"

using namespace nfloc;

namespace {

// Criterion-8 style settings at a reduced element count.
struct Fixture {
  BuiltScenario built;
  ChannelParams channel;
  NoiseSigmas sigmas;
};

Fixture setup(std::uint64_t seed, int elements = 16) {
  Fixture s{fixtures::small_scenario(seed, 5, elements, 2, 1e9), {}, {}};
  s.channel = compute_channel(s.built.scenario);
  s.sigmas = noise_floor_from_crlb(assemble_channel_fim(s.channel, s.built.stats));
  return s;
}

EstimateState truth_state(const Scenario& sc) {
  EstimateState st;
  st.position0 = sc.receiver.position0;
  st.velocity = sc.receiver.velocity;
  st.orientation = sc.receiver.orientation;
  for (const Anchor& a : sc.anchors) {
    st.clock_offset.push_back(a.clock_offset);
    st.frequency_offset.push_back(a.frequency_offset);
  }
  return st;
}

InitEstimate as_init(const EstimateState& s) {
  InitEstimate i;
  i.position0 = s.position0;
  i.velocity = s.velocity;
  i.orientation = s.orientation;
  i.clock_offset = s.clock_offset;
  i.frequency_offset = s.frequency_offset;
  return i;
}

Vec3 tilt(const Vec3& s, double degrees, std::uint64_t seed) {
  CounterRng rng(seed);
  const Vec3 dir = project_tangent(s, Vec3(rng.normal(), rng.normal(), rng.normal())).normalized();
  const double a = degrees * kPi / 180.0;
  return std::cos(a) * s + std::sin(a) * dir;
}

}  // namespace

TEST(Cost, ZeroAtTruthWithCleanData) {
  const Fixture s = setup(1);
  const MeasurementSet m = noiseless(s.channel, s.sigmas);
  EXPECT_LE(cost(truth_state(s.built.scenario), m, s.built.scenario), 1e-12);
}

TEST(Cost, OneSigmaDelayPerturbationAddsOneHalf) {
  const Fixture s = setup(2);
  MeasurementSet m = noiseless(s.channel, s.sigmas);
  m.delay_meas[7] += m.sigma_tau;
  EXPECT_NEAR(cost(truth_state(s.built.scenario), m, s.built.scenario), 0.5, 1e-6);
}

TEST(Cost, DegenerateStateIsInfinite) {
  const Fixture s = setup(3);
  const MeasurementSet m = noiseless(s.channel, s.sigmas);
  EstimateState st = truth_state(s.built.scenario);
  st.position0 = s.built.scenario.anchors[0].initial_position;
  st.position0 -= s.built.scenario.array.offset(0) * st.orientation;  // element 0 on anchor 0
  EXPECT_TRUE(std::isinf(cost(st, m, s.built.scenario)));
}

TEST(Cost, TruthBeatsRandomStates) {
  int wins = 0;
  const Fixture s = setup(4);
  const Scenario& sc = s.built.scenario;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const MeasurementSet m = sample(s.channel, s.sigmas, seed);
    EstimateState other = truth_state(sc);
    CounterRng rng(seed + 1000);
    other.position0 += 0.05 * Vec3(rng.normal(), rng.normal(), rng.normal());
    other.velocity += 0.05 * Vec3(rng.normal(), rng.normal(), rng.normal());
    other.orientation = tilt(other.orientation, 0.2, seed);
    wins += cost(truth_state(sc), m, sc) < cost(other, m, sc);
  }
  EXPECT_GE(wins, 95);
}

TEST(BlockGradient, MatchesCentralDifferences) {
  int checked = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Fixture s = setup(seed, 8);
    const Scenario& sc = s.built.scenario;
    const MeasurementSet m = sample(s.channel, s.sigmas, seed);
    EstimateState st = truth_state(sc);
    CounterRng rng(seed);
    st.position0 += 0.05 * Vec3(rng.normal(), rng.normal(), rng.normal());
    st.velocity += 0.05 * Vec3(rng.normal(), rng.normal(), rng.normal());
    st.orientation = tilt(st.orientation, 0.5, seed);
    for (double& d : st.clock_offset) d += 1e-10 * rng.normal();
    for (double& e : st.frequency_offset) e += 1e3 * rng.normal();

    for (Block block : {Block::kPosition, Block::kVelocity, Block::kOrientation}) {
      const Eigen::VectorXd g = block_gradient(st, m, sc, block);
      const double h = block == Block::kOrientation ? 1e-6 : 1e-5;
      for (int i = 0; i < 3; ++i) {
        EstimateState p = st, q = st;
        Vec3& vp = block == Block::kPosition ? p.position0 : block == Block::kVelocity ? p.velocity : p.orientation;
        Vec3& vq = block == Block::kPosition ? q.position0 : block == Block::kVelocity ? q.velocity : q.orientation;
        vp(i) += h;
        vq(i) -= h;
        const double fd = (cost(p, m, sc) - cost(q, m, sc)) / (2 * h);
        EXPECT_NEAR(g(i), fd, std::max(1e-5 * std::abs(fd), 1e-8)) << "seed " << seed << " block " << static_cast<int>(block) << " i " << i;
        ++checked;
      }
    }
    const Eigen::VectorXd g = block_gradient(st, m, sc, Block::kOffsets);
    const int nb = sc.num_anchors();
    for (int j = 0; j < 2 * nb; ++j) {
      EstimateState p = st, q = st;
      const double h = j < nb ? 1e-13 : 1e-2;
      (j < nb ? p.clock_offset[j] : p.frequency_offset[j - nb]) += h;
      (j < nb ? q.clock_offset[j] : q.frequency_offset[j - nb]) -= h;
      const double fd = (cost(p, m, sc) - cost(q, m, sc)) / (2 * h);
      EXPECT_NEAR(g(j), fd, std::max(1e-5 * std::abs(fd), 1e-8)) << "seed " << seed << " offset " << j;
      ++checked;
    }
  }
  EXPECT_EQ(checked, 20 * (9 + 10));
}

TEST(BlockGradient, StationaryAtCleanTruth) {
  const Fixture s = setup(5);
  const Scenario& sc = s.built.scenario;
  const MeasurementSet m = noiseless(s.channel, s.sigmas);
  EstimateState off = truth_state(sc);
  off.position0.x() += 1e-3;
  for (Block b : {Block::kPosition, Block::kVelocity, Block::kOrientation, Block::kOffsets}) {
    const double at_truth = block_gradient(truth_state(sc), m, sc, b).norm();
    const double nearby = block_gradient(off, m, sc, b).norm();
    EXPECT_LE(at_truth, 1e-9 * std::max(nearby, 1.0)) << static_cast<int>(b);
  }
}

TEST(BlockGradient, ReferenceElementIsBlindToOrientation) {
  const Fixture s = setup(6);
  const Scenario& sc = s.built.scenario;
  MeasurementSet m = sample(s.channel, s.sigmas, 3);
  // Effectively drop every triple except those of the reference element.
  m.sigma_tau_per_triple.assign(m.index.size(), 1e200);
  m.sigma_doppler_per_triple.assign(m.index.size(), 1e200);
  for (int b = 0; b < m.index.num_anchors; ++b)
    for (int k = 0; k < m.index.num_slots; ++k) {
      m.sigma_tau_per_triple[m.index(b, sc.array.reference_index, k)] = m.sigma_tau;
      m.sigma_doppler_per_triple[m.index(b, sc.array.reference_index, k)] = m.sigma_doppler;
    }
  EstimateState st = truth_state(sc);
  st.position0.y() += 0.1;
  EXPECT_EQ(block_gradient(st, m, sc, Block::kOrientation).norm(), 0.0);
  EXPECT_GT(block_gradient(st, m, sc, Block::kPosition).norm(), 0.0);
}

TEST(Riemannian, RetractionIdentities) {
  CounterRng rng(7);
  for (int i = 0; i < 10000; ++i) {
    const Vec3 x = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
    const Vec3 u = project_tangent(x, 3.0 * Vec3(rng.normal(), rng.normal(), rng.normal()));
    ASSERT_NEAR(x.dot(u), 0.0, 1e-12);
    ASSERT_NEAR(retract(x, u).norm(), 1.0, 1e-12);
    ASSERT_EQ(retract(x, Vec3::Zero()), x);
  }
  const Vec3 x = Vec3(1, 2, 2) / 3.0;
  EXPECT_LE((riemannian_step(x, 5.0 * x, 0.1) - x).norm(), 1e-15);
  EXPECT_THROW(riemannian_step(Vec3(1, 1, 0), Vec3::UnitZ(), 0.1), ContractViolation);
}

TEST(Refine, ZeroIterationsReturnsInit) {
  const Fixture s = setup(7);
  const MeasurementSet m = sample(s.channel, s.sigmas, 1);
  EstimateState init = truth_state(s.built.scenario);
  init.position0.x() += 0.3;
  SolverConfig cfg;
  cfg.max_outer_iters = 0;
  const EstimateState out = refine(as_init(init), m, s.built.scenario, cfg);
  EXPECT_EQ(out.position0, init.position0);
  EXPECT_EQ(out.velocity, init.velocity);
  EXPECT_EQ(out.clock_offset, init.clock_offset);
  EXPECT_FALSE(out.converged);
  EXPECT_EQ(out.iteration, 0);
}

TEST(Refine, ExactRecoveryFromPerturbedStart) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const Fixture s = setup(seed);
    const Scenario& sc = s.built.scenario;
    const MeasurementSet m = noiseless(s.channel, s.sigmas);
    EstimateState init = truth_state(sc);
    init.position0 += Vec3(0.3, -0.3, 0.3).normalized() * 0.5;
    init.velocity += Vec3(-0.2, 0.1, 0.1).normalized() * 0.2;
    init.orientation = tilt(init.orientation, 2.0, seed);
    const EstimateState out = refine(as_init(init), m, sc);
    EXPECT_TRUE(out.converged) << to_string(out.reason) << " after " << out.iteration << " cost " << out.cost;
    EXPECT_LE((out.position0 - sc.receiver.position0).norm(), 1e-6);
    EXPECT_LE((out.velocity - sc.receiver.velocity).norm(), 1e-6);
    EXPECT_LE((out.orientation - sc.receiver.orientation).norm(), 1e-6);
    for (int b = 0; b < sc.num_anchors(); ++b) {
      EXPECT_NEAR(out.clock_offset[b], sc.anchors[b].clock_offset, 1e-15);
      EXPECT_NEAR(out.frequency_offset[b], sc.anchors[b].frequency_offset, 1e-3);
    }
  }
}

TEST(Refine, MonotoneDescentAndSphereFeasibility) {
  const Fixture s = setup(8);
  const Scenario& sc = s.built.scenario;
  const MeasurementSet m = sample(s.channel, s.sigmas, 9);
  EstimateState init = truth_state(sc);
  init.position0.z() -= 0.4;
  init.orientation = tilt(init.orientation, 3.0, 2);
  const double c0 = cost(init, m, sc);
  const EstimateState out = refine(as_init(init), m, sc);
  ASSERT_FALSE(out.cost_history.empty());
  EXPECT_LE(out.cost_history.front(), c0);
  for (std::size_t i = 1; i < out.cost_history.size(); ++i) EXPECT_LE(out.cost_history[i], out.cost_history[i - 1]);
  EXPECT_NEAR(out.orientation.norm(), 1.0, 1e-10);
  EXPECT_NE(out.reason, StopReason::kNone);
}

TEST(Refine, BlockOrderDoesNotChangeTheMinimizer) {
  const Fixture s = setup(9);
  const Scenario& sc = s.built.scenario;
  const MeasurementSet m = noiseless(s.channel, s.sigmas);
  EstimateState init = truth_state(sc);
  init.position0 += Vec3(0.2, 0.1, -0.3);
  init.velocity += Vec3(0.1, -0.1, 0.05);
  init.orientation = tilt(init.orientation, 1.5, 4);
  std::array<Block, 4> order{Block::kPosition, Block::kVelocity, Block::kOffsets, Block::kOrientation};
  std::sort(order.begin(), order.end());
  int runs = 0;
  do {
    SolverConfig cfg;
    cfg.order = order;
    const EstimateState out = refine(as_init(init), m, sc, cfg);
    EXPECT_LE((out.position0 - sc.receiver.position0).norm(), 1e-5);
    EXPECT_LE((out.velocity - sc.receiver.velocity).norm(), 1e-5);
    EXPECT_LE((out.orientation - sc.receiver.orientation).norm(), 1e-5);
    ++runs;
  } while (std::next_permutation(order.begin(), order.end()) && runs < 8);
  EXPECT_EQ(runs, 8);
}

TEST(Refine, SteepestDescentVariantDescends) {
  const Fixture s = setup(10);
  const Scenario& sc = s.built.scenario;
  const MeasurementSet m = sample(s.channel, s.sigmas, 2);
  EstimateState init = truth_state(sc);
  init.position0.x() += 0.5;
  SolverConfig cfg;
  cfg.direction = BlockDirection::kSteepestDescent;
  cfg.profile_offsets = false;
  cfg.max_outer_iters = 50;
  const EstimateState out = refine(as_init(init), m, sc, cfg);
  EXPECT_LT(out.cost, cost(init, m, sc));
  for (std::size_t i = 1; i < out.cost_history.size(); ++i) EXPECT_LE(out.cost_history[i], out.cost_history[i - 1]);
}

TEST(Refine, DeterministicAndMultiStartNeverWorse) {
  const Fixture s = setup(11);
  const Scenario& sc = s.built.scenario;
  const MeasurementSet m = sample(s.channel, s.sigmas, 4);
  EstimateState init = truth_state(sc);
  init.velocity += Vec3(0.3, 0.0, -0.2);
  const EstimateState a = refine(as_init(init), m, sc);
  const EstimateState b = refine(as_init(init), m, sc);
  EXPECT_EQ(a.position0, b.position0);
  EXPECT_EQ(a.cost_history, b.cost_history);
  SolverConfig cfg;
  cfg.multi_start = 2;
  cfg.multi_start_seed = 5;
  EXPECT_LE(refine(as_init(init), m, sc, cfg).cost, a.cost);
}

TEST(Refine, NonFiniteInitialCostFails) {
  const Fixture s = setup(12);
  const MeasurementSet m = noiseless(s.channel, s.sigmas);
  EstimateState st = truth_state(s.built.scenario);
  st.position0 = s.built.scenario.anchors[0].initial_position - s.built.scenario.array.offset(0) * st.orientation;
  EXPECT_THROW(refine(as_init(st), m, s.built.scenario), EstimatorFailure);
}

TEST(SolverConfig, Validation) {
  SolverConfig c;
  EXPECT_NO_THROW(c.validate());
  c.backtracking = 1.0;
  EXPECT_THROW(c.validate(), ConfigurationError);
  c = SolverConfig{};
  c.position_step = 0.0;
  EXPECT_THROW(c.validate(), ConfigurationError);
  EXPECT_STREQ(to_string(StopReason::kCostTolerance), "cost_tol");
  EXPECT_STREQ(to_string(StopReason::kStepTolerance), "step_tol");
  EXPECT_STREQ(to_string(StopReason::kMaxIterations), "max_iters");
}
