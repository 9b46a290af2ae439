#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nfloc/channel.hpp"
#include "nfloc/config.hpp"
#include "nfloc/csv.hpp"
#include "nfloc/fisher.hpp"
#include "nfloc/harness.hpp"
#include "nfloc/measurement.hpp"

namespace fs = std::filesystem;
using namespace nfloc;

namespace {

enum Exit { kOk = 0, kUsage = 1, kNumerical = 2, kNothingLocalizable = 3 };

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::string out = "nfloc_out";
  std::string sweep = "none";
  std::vector<double> values;
  std::vector<std::uint64_t> seeds;
  int workers = 1;
  int trials = 1;
  std::string mode = "bounds_only";
};

void add_common(CLI::App* app, Common& c, bool sweep) {
  app->add_option("--config", c.config, "Scenario INI file (defaults apply when omitted)");
  app->add_option("--set", c.overrides, "Override a config key, section.key=value (repeatable)");
  app->add_option("--out", c.out, "Artifact directory");
  if (!sweep) return;
  app->add_option("--sweep", c.sweep, "Swept variable")
      ->check(CLI::IsMember({"none", "num_elements", "carrier_frequency", "slot_spacing", "num_anchors", "num_slots",
                             "snr"}));
  app->add_option("--values", c.values, "Sweep values, comma separated")->delimiter(',');
  app->add_option("--seeds", c.seeds, "Scenario seeds, comma separated (default: config seed)")->delimiter(',');
  app->add_option("--workers", c.workers, "Worker threads")->check(CLI::PositiveNumber);
}

ScenarioConfig load(const Common& c) {
  return c.config.empty() ? config_from_overrides(c.overrides) : load_config(c.config, c.overrides);
}

SweepSpec spec_from(const Common& c) {
  SweepSpec s;
  s.variable = parse_sweep_variable(c.sweep);
  s.values = c.values;
  s.seeds = c.seeds;
  s.workers = c.workers;
  s.trials_per_point = c.trials;
  s.mode = parse_study_mode(c.mode);
  s.validate();
  return s;
}

std::ofstream open_out(const std::string& dir, const std::string& name) {
  fs::create_directories(dir);
  std::ofstream f(fs::path(dir) / name);
  if (!f) throw ConfigurationError("cannot write " + (fs::path(dir) / name).string());
  return f;
}

void write_config(const std::string& dir, const ScenarioConfig& cfg) {
  auto f = open_out(dir, "config.ini");
  f << "; config_hash=" << config_hash(cfg) << "\n" << canonical_config(cfg);
}

int cmd_bounds(const Common& c) {
  const ScenarioConfig cfg = load(c);
  const SweepSpec spec = spec_from(c);
  if (spec.mode == StudyMode::kFullEstimation) throw ConfigurationError("bounds: use the estimate subcommand");
  const CampaignResult r = run_bounds_sweep(spec, cfg);
  write_config(c.out, cfg);
  auto b = open_out(c.out, "bounds.csv");
  write_bounds_csv(b, r.bounds);
  auto t = open_out(c.out, "timing.csv");
  write_timing_csv(t, r.timing);
  std::cout << "wrote " << r.bounds.size() << " rows to " << (fs::path(c.out) / "bounds.csv").string() << "\n";
  return r.any_localizable() ? kOk : kNothingLocalizable;
}

int cmd_estimate(const Common& c) {
  const ScenarioConfig cfg = load(c);
  SweepSpec spec = spec_from(c);
  spec.mode = StudyMode::kFullEstimation;
  const CampaignResult r = run_estimation_campaign(spec, cfg);
  write_config(c.out, cfg);
  auto b = open_out(c.out, "bounds.csv");
  write_bounds_csv(b, r.bounds);
  auto tr = open_out(c.out, "trials.csv");
  write_trials_csv(tr, r.trials);
  auto ag = open_out(c.out, "aggregates.csv");
  write_aggregates_csv(ag, r.aggregates);
  auto tm = open_out(c.out, "timing.csv");
  write_timing_csv(tm, r.timing);
  for (const auto& a : r.aggregates)
    std::cout << "value=" << format_double(a.value) << " seed=" << a.seed << " ok=" << a.ok_trials << "/" << a.trials
              << " rmse/bound p=" << format_double(a.ratio_p) << " v=" << format_double(a.ratio_v)
              << " o=" << format_double(a.ratio_o) << "\n";
  return r.any_localizable() ? kOk : kNothingLocalizable;
}

int cmd_doppler(const Common& c) {
  const ScenarioConfig cfg = load(c);
  const CampaignResult r = run_doppler_only_study(spec_from(c), cfg);
  write_config(c.out, cfg);
  auto d = open_out(c.out, "doppler_study.csv");
  write_doppler_csv(d, r.doppler);
  auto t = open_out(c.out, "timing.csv");
  write_timing_csv(t, r.timing);
  for (const auto& row : r.doppler)
    std::cout << "value=" << format_double(row.value) << " seed=" << row.seed
              << " doppler/joint p=" << format_double(row.ratio_p) << " v=" << format_double(row.ratio_v)
              << " o=" << format_double(row.ratio_o) << "\n";
  return r.any_localizable() ? kOk : kNothingLocalizable;
}

int cmd_verify(const std::string& dir) {
  std::ifstream tr(fs::path(dir) / "trials.csv"), ag(fs::path(dir) / "aggregates.csv");
  if (!tr || !ag) throw ConfigurationError("verify: " + dir + " lacks trials.csv or aggregates.csv");
  const VerifyReport rep = verify(tr, ag);
  for (const auto& m : rep.mismatches) std::cout << "mismatch: " << m << "\n";
  std::cout << (rep.ok ? "verified " : "FAILED ") << rep.rows_checked << " aggregate rows\n";
  return rep.ok ? kOk : kNumerical;
}

int cmd_scenario_gen(const Common& c, bool with_measurements, std::uint64_t meas_seed) {
  const ScenarioConfig cfg = load(c);
  const BuiltScenario b = build_scenario(cfg);
  const Scenario& s = b.scenario;
  write_config(c.out, cfg);
  auto f = open_out(c.out, "scenario.csv");
  f << "# nfloc scenario v1 config_hash=" << config_hash(cfg) << "\n"
    << "kind,index,x,y,z,vx,vy,vz,clock_offset,frequency_offset\n";
  const MotionState& rx = s.receiver;
  f << "receiver,1," << format_double(rx.position0.x()) << ',' << format_double(rx.position0.y()) << ','
    << format_double(rx.position0.z()) << ',' << format_double(rx.velocity.x()) << ','
    << format_double(rx.velocity.y()) << ',' << format_double(rx.velocity.z()) << ",0,0\n";
  f << "orientation,1," << format_double(rx.orientation.x()) << ',' << format_double(rx.orientation.y()) << ','
    << format_double(rx.orientation.z()) << ",0,0,0,0,0\n";
  for (std::size_t i = 0; i < s.anchors.size(); ++i) {
    const Anchor& a = s.anchors[i];
    for (std::size_t k = 0; k < a.velocity_per_slot.size(); ++k) {
      const Vec3 p = a.position(static_cast<int>(k), s.slots.slot_spacing);
      const Vec3& v = a.velocity_per_slot[k];
      f << "anchor_slot" << k + 1 << ',' << i + 1 << ',' << format_double(p.x()) << ',' << format_double(p.y()) << ','
        << format_double(p.z()) << ',' << format_double(v.x()) << ',' << format_double(v.y()) << ','
        << format_double(v.z()) << ',' << format_double(a.clock_offset) << ',' << format_double(a.frequency_offset)
        << "\n";
    }
  }
  std::cout << "noise_psd=" << format_double(s.noise_psd) << " config_hash=" << config_hash(cfg) << "\n";
  if (with_measurements) {
    const ChannelParams ch = compute_channel(s);
    const ChannelFim cf = assemble_channel_fim(ch, b.stats, b.fim);
    auto m = open_out(c.out, "measurements.csv");
    write_measurements_csv(m, sample(ch, noise_floor_from_crlb(cf), meas_seed));
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Near-field motion-state localization: bounds, estimation campaigns and studies"};
  app.require_subcommand(1);

  Common bounds_opts, est_opts, dop_opts, gen_opts;
  auto* bounds = app.add_subcommand("bounds", "Constrained bounds over a sweep");
  add_common(bounds, bounds_opts, true);
  bounds->add_option("--mode", bounds_opts.mode, "bounds_only, doppler_only or delay_only")
      ->check(CLI::IsMember({"bounds_only", "doppler_only", "delay_only"}));

  auto* estimate = app.add_subcommand("estimate", "Monte Carlo estimation campaign");
  add_common(estimate, est_opts, true);
  estimate->add_option("--trials", est_opts.trials, "Trials per sweep point")->check(CLI::PositiveNumber);

  auto* doppler = app.add_subcommand("doppler-study", "Joint versus Doppler-only bounds");
  add_common(doppler, dop_opts, true);

  std::string verify_dir = "nfloc_out";
  auto* ver = app.add_subcommand("verify", "Recompute aggregates from the raw trial file");
  ver->add_option("--out", verify_dir, "Directory holding trials.csv and aggregates.csv");

  bool with_meas = false;
  std::uint64_t meas_seed = 1;
  auto* gen = app.add_subcommand("scenario-gen", "Write the sampled scenario (and optionally measurements)");
  add_common(gen, gen_opts, false);
  gen->add_flag("--measurements", with_meas, "Also write one noisy measurement set");
  gen->add_option("--measurement-seed", meas_seed, "Seed of the measurement noise");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*bounds) return cmd_bounds(bounds_opts);
    if (*estimate) return cmd_estimate(est_opts);
    if (*doppler) return cmd_doppler(dop_opts);
    if (*ver) return cmd_verify(verify_dir);
    if (*gen) return cmd_scenario_gen(gen_opts, with_meas, meas_seed);
  } catch (const ConfigurationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  }
  return kUsage;
}
