#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nfloc/estimator.hpp"
#include "nfloc/fisher.hpp"
#include "nfloc/initializer.hpp"
#include "nfloc/scenario.hpp"
#include "nfloc/waveform.hpp"

namespace nfloc {

/// Declarative scenario description. Defaults give the reference setup: five
/// anchors uniform in a 50 m sphere, 10 m/s anchors, 5 m/s receiver, 500 MHz
/// raised cosine at 10 GHz, half-wavelength spacing, 10 dB SNR.
struct ScenarioConfig {
  // [anchors]
  int num_anchors = 5;
  double anchor_radius = 50.0;
  double anchor_speed = 10.0;
  AnchorVelocityMode anchor_velocity_mode = AnchorVelocityMode::kConstant;
  double clock_offset_sd = 1e-9;
  double frequency_offset_sd = 100.0;
  double anchor_min_distance = 1.0;  // from the sphere center and from every element

  // [receiver]
  Vec3 center = Vec3::Zero();  // array midpoint at the first slot
  double receiver_speed = 5.0;
  std::optional<Vec3> receiver_velocity;
  std::optional<Vec3> orientation;

  // [array]
  int num_elements = 100;
  double element_spacing = 0.0;  // 0 selects half a wavelength
  int reference_index = 0;       // one-based; 0 selects floor((N_U + 1) / 2)

  // [slots]
  int num_slots = 2;
  double slot_spacing = 0.5;

  // [waveform]
  PulseKind waveform_kind = PulseKind::kRaisedCosine;
  double rolloff = 0.25;
  double bandwidth = 500e6;
  double zero_crossing_time = 0.0;  // overrides bandwidth when positive
  double carrier_frequency = 10e9;

  // [noise]
  double snr_db = 10.0;
  double pathloss_exponent = 1.0;
  bool doppler_fim_includes_energy = false;
  OffsetConvention offset_convention = OffsetConvention::kModel;
  bool per_triple_sigma = false;

  // [seed]
  std::uint64_t seed = 1;

  // [solver]
  SolverConfig solver;

  // [initializer]
  int index_set_size = 8;

  void validate() const;
};

/// Reads the INI document; unknown sections or keys are rejected. `overrides`
/// are "section.key=value" strings applied on top of the file.
ScenarioConfig parse_config(std::istream& in, const std::vector<std::string>& overrides = {});
ScenarioConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});
ScenarioConfig config_from_overrides(const std::vector<std::string>& overrides);

/// Canonical INI rendering of every field; the config hash is taken over it.
std::string canonical_config(const ScenarioConfig& cfg);
std::string config_hash(const ScenarioConfig& cfg);

struct BuiltScenario {
  Scenario scenario;
  WaveformStats stats;
  FimOptions fim;
  InitializerConfig initializer;
};

/// Samples anchors and receiver from `cfg.seed`, computes waveform statistics
/// and calibrates N_o to the configured SNR.
BuiltScenario build_scenario(const ScenarioConfig& cfg);

Waveform make_waveform(const ScenarioConfig& cfg);

}  // namespace nfloc
