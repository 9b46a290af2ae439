#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "nfloc/common.hpp"
#include "nfloc/waveform.hpp"

namespace nfloc {

/// Transmitting anchor with known trajectory and unknown clock/frequency offsets.
struct Anchor {
  Vec3 initial_position = Vec3::Zero();
  std::vector<Vec3> velocity_per_slot;  // one entry per slot
  double clock_offset = 0.0;            // s
  double frequency_offset = 0.0;        // Hz

  /// Position during zero-based slot k: p_0 + k * dt * v_k.
  Vec3 position(int k, double slot_spacing) const {
    return initial_position + (k * slot_spacing) * velocity_per_slot.at(static_cast<std::size_t>(k));
  }
};

/// Motion state of the receiving array: reference-element position at the
/// first slot, constant velocity, and array axis.
struct MotionState {
  Vec3 position0 = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Vec3 orientation = Vec3::UnitX();
};

using ReceiverTruth = MotionState;

/// Uniform linear array. Indices are zero-based; element u sits at
/// (u - reference_index) * element_spacing along the array axis.
struct ArraySpec {
  int num_elements = 2;
  double element_spacing = 0.015;  // m
  int reference_index = 0;

  double offset(int u) const { return (u - reference_index) * element_spacing; }
  double aperture() const { return (num_elements - 1) * element_spacing; }
  void validate() const;
};

struct SlotPlan {
  int num_slots = 1;
  double slot_spacing = 0.5;  // s

  double elapsed(int k) const { return k * slot_spacing; }
  void validate() const;
};

/// Flat indexing of (anchor, element, slot) triples. Within an anchor, entries
/// are slot-major so that element index varies fastest.
struct TripleIndexer {
  int num_anchors = 0;
  int num_elements = 0;
  int num_slots = 0;

  std::size_t operator()(int b, int u, int k) const {
    return (static_cast<std::size_t>(b) * num_slots + k) * num_elements + u;
  }
  std::size_t local(int u, int k) const { return static_cast<std::size_t>(k) * num_elements + u; }
  std::size_t per_anchor() const { return static_cast<std::size_t>(num_elements) * num_slots; }
  std::size_t size() const { return per_anchor() * num_anchors; }
  std::size_t element_slot(int u, int k) const { return local(u, k); }
  std::size_t anchor_slot(int b, int k) const { return static_cast<std::size_t>(b) * num_slots + k; }
};

/// Geometric quantities for every (anchor, element, slot) triple.
///
/// `unit_dir` points from the receive element toward the anchor, so that
/// `distance * unit_dir == displacement == anchor_position - element_position`
/// and a receding anchor yields a positive Doppler shift.
struct GeometryTable {
  TripleIndexer index;
  std::vector<Vec3> element_position;  // [element_slot(u,k)]
  std::vector<Vec3> anchor_position;   // [anchor_slot(b,k)]
  std::vector<Vec3> anchor_velocity;   // [anchor_slot(b,k)]
  std::vector<double> distance;        // [index(b,u,k)]
  std::vector<Vec3> unit_dir;
  std::vector<Vec3> displacement;
  std::vector<Vec3> rel_velocity;  // anchor velocity minus receiver velocity
};

Vec3 element_position(const MotionState& receiver, const ArraySpec& array, const SlotPlan& plan, int u,
                      int k);

GeometryTable build_geometry(std::span<const Anchor> anchors, const MotionState& receiver,
                             const ArraySpec& array, const SlotPlan& plan);

struct FresnelReport {
  double aperture = 0.0;
  double lower_bound = 0.0;  // 0.62 sqrt(D^3 / lambda)
  double upper_bound = 0.0;  // 2 D^2 / lambda
  std::vector<bool> inside;  // per triple
  double fraction_inside = 0.0;
};

bool inside_fresnel_region(double distance, double aperture, double wavelength);
FresnelReport fresnel_check(const ArraySpec& array, double wavelength, const GeometryTable& geometry);

/// Everything needed to synthesize channel parameters for one run.
struct Scenario {
  std::vector<Anchor> anchors;
  MotionState receiver;
  ArraySpec array;
  SlotPlan slots;
  Waveform waveform;
  double noise_psd = 1.0;          // N_o, W/Hz
  double pathloss_exponent = 1.0;  // alpha in lambda d^-alpha / (4 pi)

  int num_anchors() const { return static_cast<int>(anchors.size()); }
  TripleIndexer indexer() const {
    return {num_anchors(), array.num_elements, slots.num_slots};
  }
  void validate() const;
};

enum class AnchorVelocityMode {
  kConstant,  // one velocity per anchor, held over all slots
  kDistinct,  // a fresh random direction every slot, same speed
  kSameDirection,  // every anchor shares one direction of motion
};

struct AnchorPlacement {
  int count = 5;
  Vec3 center = Vec3::Zero();
  double radius = 50.0;  // m
  double speed = 10.0;   // m/s
  AnchorVelocityMode velocity_mode = AnchorVelocityMode::kConstant;
  double clock_offset_sd = 1e-9;      // s
  double frequency_offset_sd = 100.0;  // Hz
  double min_distance = 1.0;           // m, rejection radius around the center
};

/// Anchors drawn uniformly inside a sphere, reproducible from `seed`. Draws
/// rejected by `accept` (e.g. too close to the array) are redrawn.
std::vector<Anchor> sample_anchors(const AnchorPlacement& placement, int num_slots, std::uint64_t seed,
                                   const std::function<bool(const Vec3&)>& accept = {});

/// Uniformly distributed unit vector.
Vec3 random_unit_vector(std::uint64_t seed, std::uint64_t stream);

}  // namespace nfloc
