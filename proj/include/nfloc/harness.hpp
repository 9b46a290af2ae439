#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "nfloc/config.hpp"

namespace nfloc {

inline constexpr const char* kCodeVersion = "0.1.0";

enum class SweepVariable { kNone, kNumElements, kCarrierFrequency, kSlotSpacing, kNumAnchors, kNumSlots, kSnr };
enum class StudyMode { kBoundsOnly, kFullEstimation, kDopplerOnly, kDelayOnly };

const char* to_string(SweepVariable v);
const char* to_string(StudyMode m);
SweepVariable parse_sweep_variable(const std::string& s);
StudyMode parse_study_mode(const std::string& s);

struct SweepSpec {
  SweepVariable variable = SweepVariable::kNone;
  std::vector<double> values;  // ignored for kNone, which runs the base config once
  int trials_per_point = 1;
  StudyMode mode = StudyMode::kBoundsOnly;
  /// Scenario seeds. Empty means the config's own seed.
  std::vector<std::uint64_t> seeds;
  int workers = 1;

  void validate() const;
};

/// Copy of `base` with the swept quantity set to `value`.
ScenarioConfig apply_sweep_value(const ScenarioConfig& base, SweepVariable variable, double value);

struct BoundsRow {
  std::string config_hash;
  double value = 0.0;
  std::uint64_t seed = 0;
  StudyMode mode = StudyMode::kBoundsOnly;
  bool localizable = false;
  int rank = 0;
  double condition_number = 0.0;
  double peb = 0.0, veb = 0.0, oeb = 0.0;
  double peb_sq = 0.0, veb_sq = 0.0, oeb_sq = 0.0;
  double fresnel_fraction = 0.0;
};

enum class TrialStatus { kOk, kInitializerFailed, kNumericalFailure };
const char* to_string(TrialStatus s);

struct TrialRow {
  std::string config_hash;
  double value = 0.0;
  std::uint64_t seed = 0;   // scenario seed
  int trial = 0;
  std::uint64_t trial_seed = 0;  // measurement-noise seed
  TrialStatus status = TrialStatus::kOk;
  bool converged = false;
  int iterations = 0;
  std::string reason;
  double cost = 0.0;
  double err_p = 0.0, err_v = 0.0, err_o = 0.0;  // Euclidean norms
  double init_err_p = 0.0, init_err_v = 0.0, init_err_o = 0.0;
};

struct AggregateRow {
  std::string config_hash;
  double value = 0.0;
  std::uint64_t seed = 0;
  int trials = 0;
  int ok_trials = 0;
  double convergence_rate = 0.0;
  double rmse_p = 0.0, rmse_v = 0.0, rmse_o = 0.0;
  double peb = 0.0, veb = 0.0, oeb = 0.0;
  double ratio_p = 0.0, ratio_v = 0.0, ratio_o = 0.0;  // rmse / bound
};

struct DopplerStudyRow {
  std::string config_hash;
  double value = 0.0;
  std::uint64_t seed = 0;
  BoundsRow joint;
  BoundsRow doppler;
  double ratio_p = 0.0, ratio_v = 0.0, ratio_o = 0.0;  // doppler-only / joint
};

struct TimingRow {
  double value = 0.0;
  std::uint64_t seed = 0;
  double wall_time_s = 0.0;
};

struct CampaignResult {
  std::string base_hash;
  std::vector<BoundsRow> bounds;
  std::vector<TrialRow> trials;
  std::vector<AggregateRow> aggregates;
  std::vector<DopplerStudyRow> doppler;
  std::vector<TimingRow> timing;

  bool any_localizable() const;
};

/// Seed of the measurement noise for one trial. Independent of the sweep value
/// so that every sweep point sees the same noise draws.
std::uint64_t trial_seed(std::uint64_t scenario_seed, int trial);

BoundsRow evaluate_point(const ScenarioConfig& cfg, StudyMode mode, double value);

CampaignResult run_bounds_sweep(const SweepSpec& spec, const ScenarioConfig& base);
CampaignResult run_estimation_campaign(const SweepSpec& spec, const ScenarioConfig& base);
CampaignResult run_doppler_only_study(const SweepSpec& spec, const ScenarioConfig& base);

/// Runs one estimation trial end to end (sampling, initializer, refinement).
TrialRow run_trial(const ScenarioConfig& cfg, double value, int trial);

/// Aggregates trial rows per (value, seed); `bounds` supplies the bound columns.
std::vector<AggregateRow> aggregate(const std::vector<TrialRow>& trials, const std::vector<BoundsRow>& bounds);

void write_bounds_csv(std::ostream& out, const std::vector<BoundsRow>& rows);
void write_trials_csv(std::ostream& out, const std::vector<TrialRow>& rows);
void write_aggregates_csv(std::ostream& out, const std::vector<AggregateRow>& rows);
void write_doppler_csv(std::ostream& out, const std::vector<DopplerStudyRow>& rows);
void write_timing_csv(std::ostream& out, const std::vector<TimingRow>& rows);

std::vector<TrialRow> read_trials_csv(std::istream& in);
std::vector<AggregateRow> read_aggregates_csv(std::istream& in);

struct VerifyReport {
  bool ok = true;
  int rows_checked = 0;
  std::vector<std::string> mismatches;
};

/// Recomputes every aggregate row from the raw trials and compares the
/// serialized values exactly.
VerifyReport verify(std::istream& trials, std::istream& aggregates);

/// Runs `count` tasks on `workers` threads; `task(i)` writes only to slot i.
void parallel_for(int count, int workers, const std::function<void(int)>& task);

}  // namespace nfloc
