#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nfloc/initializer.hpp"
#include "nfloc/measurement.hpp"
#include "nfloc/scenario.hpp"

namespace nfloc {

enum class Block { kPosition, kVelocity, kOffsets, kOrientation };

enum class StopReason { kNone, kCostTolerance, kStepTolerance, kMaxIterations };

const char* to_string(StopReason r);

enum class BlockDirection {
  kGaussNewton,      // block Gauss-Newton direction, unit initial step
  kSteepestDescent,  // negative gradient scaled to the block's initial step
};

struct SolverConfig {
  int max_outer_iters = 500;
  double cost_tolerance = 1e-10;  // relative decrease per outer iteration
  int cost_patience = 3;          // consecutive iterations below the tolerance
  double cost_floor = 1e-12;      // costs at or below this count as an exact fit
  double step_tolerance = 1e-12;  // smallest step fraction tried by backtracking
  double position_step = 1.0;       // m
  double velocity_step = 0.5;       // m/s
  double clock_step = 1e-7;         // s
  double frequency_step = 10.0;     // Hz
  double orientation_step = 0.05;   // tangent-vector norm
  double backtracking = 0.5;
  double armijo = 1e-4;
  BlockDirection direction = BlockDirection::kGaussNewton;
  /// Solve the offsets in closed form inside every cost evaluation of the
  /// other blocks (variable projection). The offsets block is then exact.
  bool profile_offsets = true;
  std::array<Block, 4> order{Block::kPosition, Block::kVelocity, Block::kOffsets, Block::kOrientation};
  /// Extra jittered restarts; the lowest-cost result wins.
  int multi_start = 0;
  std::uint64_t multi_start_seed = 0;
  void validate() const;
};

struct EstimateState {
  Vec3 position0 = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Vec3 orientation = Vec3::UnitX();
  std::vector<double> clock_offset;
  std::vector<double> frequency_offset;
  double cost = 0.0;
  int iteration = 0;
  bool converged = false;
  StopReason reason = StopReason::kNone;
  std::vector<double> cost_history;  // cost after each outer iteration

  MotionState motion() const { return {position0, velocity, orientation}; }
};

EstimateState state_from_init(const InitEstimate& init);

/// Negative log-likelihood: sum of squared whitened delay and Doppler residuals
/// over two. Returns +inf when the candidate places an element on an anchor.
double cost(const EstimateState& state, const MeasurementSet& meas, const Scenario& scenario);

/// Gradient of `cost` with respect to one block at the state's own offsets.
/// Position, velocity and orientation give 3-vectors (orientation is the
/// Euclidean gradient in R^3); offsets give [delta_1..N_B, eps_1..N_B].
Eigen::VectorXd block_gradient(const EstimateState& state, const MeasurementSet& meas, const Scenario& scenario,
                               Block block);

/// u - <x, u> x.
Vec3 project_tangent(const Vec3& x, const Vec3& u);
/// (x + u) / sqrt(1 + |u|^2) for tangent u.
Vec3 retract(const Vec3& x, const Vec3& u);
/// Projects `direction` onto the tangent space at `x`, scales by `step` and retracts.
Vec3 riemannian_step(const Vec3& x, const Vec3& direction, double step);

/// Cyclic block descent from `init`.
EstimateState refine(const InitEstimate& init, const MeasurementSet& meas, const Scenario& scenario,
                     const SolverConfig& cfg = {});

}  // namespace nfloc
