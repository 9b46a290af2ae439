#pragma once

#include <map>
#include <span>
#include <utility>
#include <vector>

#include "nfloc/measurement.hpp"
#include "nfloc/scenario.hpp"

namespace nfloc {

/// Element position fixes keyed by (element, slot), zero-based.
using ElementFixes = std::map<std::pair<int, int>, Vec3>;

enum class VelocityInitMode {
  kAuto,     // finite differences when N_K >= 2, Doppler least squares otherwise
  kFixes,    // finite differences of element fixes
  kDoppler,  // single-snapshot Doppler least squares
};

struct InitializerConfig {
  /// Zero-based element indices used for fixes; empty selects `default_set_size`
  /// equally spaced elements.
  std::vector<int> index_set;
  int default_set_size = 8;
  VelocityInitMode velocity_mode = VelocityInitMode::kAuto;
  double max_condition = 1e12;
  /// Hand-off plausibility windows for the offsets.
  double max_clock_offset = 1e-3;       // s
  double max_frequency_offset = 1e7;    // Hz
  /// Coarse search used when fewer than four anchors are available.
  bool allow_grid_fallback = true;
  int grid_points_per_axis = 21;
  int grid_directions = 64;
};

struct InitEstimate {
  Vec3 position0 = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Vec3 orientation = Vec3::UnitX();
  std::vector<double> clock_offset;
  std::vector<double> frequency_offset;
  ElementFixes element_fixes;
  std::vector<int> index_set;
  bool used_grid_fallback = false;
};

/// Default index set: `count` equally spaced elements including both ends.
std::vector<int> default_index_set(int num_elements, int count);

/// Linearized TDoA fix of one element from per-anchor delays at one slot.
/// Needs at least four anchors; differencing against the first anchor removes a
/// common epoch but not per-anchor clock offsets.
Vec3 tdoa_element_fix(std::span<const double> delays, std::span<const Vec3> anchor_positions,
                      double max_condition = 1e12);

/// Normalized average of consecutive-element differences along `index_set`
/// (in the given order), with the sign chosen to point from the lowest to the
/// highest element index.
Vec3 orientation_init(const ElementFixes& fixes, const std::vector<int>& index_set, int num_slots);

Vec3 velocity_init_from_fixes(const ElementFixes& fixes, const std::vector<int>& index_set, const SlotPlan& plan);

/// Single-snapshot Doppler least squares at the first slot. Rows are the unit
/// directions from the element fixes toward each anchor; frequency offsets are
/// ignored, which biases the result when they are large.
Vec3 velocity_init_from_doppler(const MeasurementSet& meas, const Scenario& scenario, const ElementFixes& fixes,
                                const std::vector<int>& index_set, double max_condition = 1e12);

/// Back-propagates each fix to the reference element at the first slot and
/// averages.
Vec3 position_init(const ElementFixes& fixes, const std::vector<int>& index_set, const Vec3& velocity,
                   const Vec3& orientation, const ArraySpec& array, const SlotPlan& plan);

/// Per-anchor mean residuals of delay and Doppler against the model at `state`.
std::pair<std::vector<double>, std::vector<double>> offset_init(const MeasurementSet& meas,
                                                                const Scenario& scenario,
                                                                const MotionState& state);

/// Full geometric initializer. Reads only the known parts of `scenario`
/// (anchor trajectories, array layout, slots, waveform); the receiver truth and
/// anchor offsets are never accessed.
InitEstimate initialize(const MeasurementSet& meas, const Scenario& scenario, const InitializerConfig& cfg = {});

}  // namespace nfloc
