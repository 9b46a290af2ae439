#include "nfloc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <istream>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "nfloc/channel.hpp"
#include "nfloc/csv.hpp"
#include "nfloc/estimator.hpp"
#include "nfloc/fisher.hpp"
#include "nfloc/initializer.hpp"
#include "nfloc/measurement.hpp"
#include "nfloc/random.hpp"

namespace nfloc {

const char* to_string(SweepVariable v) {
  switch (v) {
    case SweepVariable::kNumElements: return "num_elements";
    case SweepVariable::kCarrierFrequency: return "carrier_frequency";
    case SweepVariable::kSlotSpacing: return "slot_spacing";
    case SweepVariable::kNumAnchors: return "num_anchors";
    case SweepVariable::kNumSlots: return "num_slots";
    case SweepVariable::kSnr: return "snr";
    case SweepVariable::kNone: break;
  }
  return "none";
}

const char* to_string(StudyMode m) {
  switch (m) {
    case StudyMode::kFullEstimation: return "full_estimation";
    case StudyMode::kDopplerOnly: return "doppler_only";
    case StudyMode::kDelayOnly: return "delay_only";
    case StudyMode::kBoundsOnly: break;
  }
  return "bounds_only";
}

const char* to_string(TrialStatus s) {
  switch (s) {
    case TrialStatus::kInitializerFailed: return "init_failed";
    case TrialStatus::kNumericalFailure: return "numerical_failure";
    case TrialStatus::kOk: break;
  }
  return "ok";
}

SweepVariable parse_sweep_variable(const std::string& s) {
  for (auto v : {SweepVariable::kNone, SweepVariable::kNumElements, SweepVariable::kCarrierFrequency,
                 SweepVariable::kSlotSpacing, SweepVariable::kNumAnchors, SweepVariable::kNumSlots, SweepVariable::kSnr})
    if (s == to_string(v)) return v;
  throw ConfigurationError("unknown sweep variable '" + s + "'");
}

StudyMode parse_study_mode(const std::string& s) {
  for (auto m : {StudyMode::kBoundsOnly, StudyMode::kFullEstimation, StudyMode::kDopplerOnly, StudyMode::kDelayOnly})
    if (s == to_string(m)) return m;
  throw ConfigurationError("unknown mode '" + s + "'");
}

void SweepSpec::validate() const {
  if (variable != SweepVariable::kNone) {
    if (values.empty()) throw ConfigurationError("sweep: values must be non-empty");
    if (!std::is_sorted(values.begin(), values.end())) throw ConfigurationError("sweep: values must be sorted");
  }
  if (trials_per_point < 1) throw ConfigurationError("sweep: trials_per_point must be at least 1");
  if (workers < 1) throw ConfigurationError("sweep: workers must be at least 1");
}

ScenarioConfig apply_sweep_value(const ScenarioConfig& base, SweepVariable variable, double value) {
  ScenarioConfig c = base;
  auto as_int = [&](const char* what) {
    if (value != std::round(value)) throw ConfigurationError(std::string("sweep: ") + what + " needs integer values");
    return static_cast<int>(value);
  };
  switch (variable) {
    case SweepVariable::kNumElements: c.num_elements = as_int("num_elements"); break;
    case SweepVariable::kCarrierFrequency: c.carrier_frequency = value; break;
    case SweepVariable::kSlotSpacing: c.slot_spacing = value; break;
    case SweepVariable::kNumAnchors: c.num_anchors = as_int("num_anchors"); break;
    case SweepVariable::kNumSlots: c.num_slots = as_int("num_slots"); break;
    case SweepVariable::kSnr: c.snr_db = value; break;
    case SweepVariable::kNone: break;
  }
  c.validate();
  return c;
}

bool CampaignResult::any_localizable() const {
  for (const auto& r : bounds)
    if (r.localizable) return true;
  for (const auto& r : doppler)
    if (r.joint.localizable) return true;
  return false;
}

std::uint64_t trial_seed(std::uint64_t scenario_seed, int trial) {
  return CounterRng::derive(scenario_seed, {0x747269616cULL, static_cast<std::uint64_t>(trial)});
}

void parallel_for(int count, int workers, const std::function<void(int)>& task) {
  if (count <= 0) return;
  std::vector<std::exception_ptr> errors(count);
  auto guarded = [&](int i) {
    try {
      task(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const int n = std::min(workers, count);
  if (n <= 1) {
    for (int i = 0; i < count; ++i) guarded(i);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(n);
    for (int w = 0; w < n; ++w)
      pool.emplace_back([&] {
        for (int i = next++; i < count; i = next++) guarded(i);
      });
    for (auto& t : pool) t.join();
  }
  // The lowest failing index wins so the reported error is schedule-independent.
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

namespace {

struct Point {
  double value;
  std::uint64_t seed;
  ScenarioConfig cfg;
};

std::vector<Point> expand(const SweepSpec& spec, const ScenarioConfig& base) {
  spec.validate();
  std::vector<double> values = spec.values;
  if (spec.variable == SweepVariable::kNone) values = {0.0};
  std::vector<std::uint64_t> seeds = spec.seeds;
  if (seeds.empty()) seeds = {base.seed};
  std::vector<Point> pts;
  for (double v : values)
    for (std::uint64_t s : seeds) {
      ScenarioConfig c = apply_sweep_value(base, spec.variable, v);
      c.seed = s;
      pts.push_back({v, s, std::move(c)});
    }
  return pts;
}

FimOptions fim_options_for(const BuiltScenario& b, StudyMode mode) {
  FimOptions o = b.fim;
  if (mode == StudyMode::kDopplerOnly) o.mode = MeasurementMode::kDopplerOnly;
  else if (mode == StudyMode::kDelayOnly) o.mode = MeasurementMode::kDelayOnly;
  else o.mode = MeasurementMode::kJoint;
  return o;
}

BoundsRow row_from(const BuiltScenario& b, const ScenarioConfig& cfg, StudyMode mode, double value) {
  const BoundReport rep = evaluate_bounds(b.scenario, b.stats, fim_options_for(b, mode));
  const Scenario& s = b.scenario;
  const GeometryTable g = build_geometry(s.anchors, s.receiver, s.array, s.slots);
  BoundsRow r;
  r.config_hash = config_hash(cfg);
  r.value = value;
  r.seed = cfg.seed;
  r.mode = mode;
  r.localizable = rep.localizable;
  r.rank = rep.rank_kappa1;
  r.condition_number = rep.condition_number;
  r.peb = rep.peb;
  r.veb = rep.veb;
  r.oeb = rep.oeb;
  r.peb_sq = rep.peb_sq;
  r.veb_sq = rep.veb_sq;
  r.oeb_sq = rep.oeb_sq;
  r.fresnel_fraction = fresnel_check(s.array, s.waveform.wavelength(), g).fraction_inside;
  return r;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

BoundsRow evaluate_point(const ScenarioConfig& cfg, StudyMode mode, double value) {
  const BuiltScenario b = build_scenario(cfg);
  return row_from(b, cfg, mode == StudyMode::kFullEstimation ? StudyMode::kBoundsOnly : mode, value);
}

CampaignResult run_bounds_sweep(const SweepSpec& spec, const ScenarioConfig& base) {
  const std::vector<Point> pts = expand(spec, base);
  CampaignResult out;
  out.base_hash = config_hash(base);
  out.bounds.resize(pts.size());
  out.timing.resize(pts.size());
  parallel_for(static_cast<int>(pts.size()), spec.workers, [&](int i) {
    const auto t0 = std::chrono::steady_clock::now();
    out.bounds[i] = evaluate_point(pts[i].cfg, spec.mode, pts[i].value);
    out.timing[i] = {pts[i].value, pts[i].seed, seconds_since(t0)};
  });
  return out;
}

TrialRow run_trial(const ScenarioConfig& cfg, double value, int trial) {
  TrialRow r;
  r.config_hash = config_hash(cfg);
  r.value = value;
  r.seed = cfg.seed;
  r.trial = trial;
  r.trial_seed = trial_seed(cfg.seed, trial);

  const BuiltScenario b = build_scenario(cfg);
  const Scenario& s = b.scenario;
  const ChannelParams ch = compute_channel(s);
  const ChannelFim cf = assemble_channel_fim(ch, b.stats, b.fim);
  const MeasurementSet meas = cfg.per_triple_sigma ? sample(ch, per_triple_sigmas(cf), r.trial_seed)
                                                   : sample(ch, noise_floor_from_crlb(cf), r.trial_seed);
  const MotionState& truth = s.receiver;

  InitEstimate init;
  try {
    init = initialize(meas, s, b.initializer);
  } catch (const InitializerFailure&) {
    r.status = TrialStatus::kInitializerFailed;
    r.reason = "init_failed";
    r.err_p = r.err_v = r.err_o = std::numeric_limits<double>::quiet_NaN();
    r.init_err_p = r.init_err_v = r.init_err_o = r.cost = r.err_p;
    return r;
  }
  r.init_err_p = (init.position0 - truth.position0).norm();
  r.init_err_v = (init.velocity - truth.velocity).norm();
  r.init_err_o = (init.orientation - truth.orientation).norm();

  SolverConfig solver = cfg.solver;
  solver.multi_start_seed = r.trial_seed;
  EstimateState est;
  try {
    est = refine(init, meas, s, solver);
  } catch (const EstimatorFailure&) {
    r.status = TrialStatus::kNumericalFailure;
    r.reason = "estimator_failed";
    r.err_p = r.err_v = r.err_o = r.cost = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  r.converged = est.converged;
  r.iterations = est.iteration;
  r.reason = to_string(est.reason);
  r.cost = est.cost;
  r.err_p = (est.position0 - truth.position0).norm();
  r.err_v = (est.velocity - truth.velocity).norm();
  r.err_o = (est.orientation - truth.orientation).norm();
  return r;
}

std::vector<AggregateRow> aggregate(const std::vector<TrialRow>& trials, const std::vector<BoundsRow>& bounds) {
  std::vector<AggregateRow> out;
  std::map<std::pair<std::string, std::uint64_t>, std::size_t> slot;
  struct Acc {
    double sp = 0.0, sv = 0.0, so = 0.0;
    int converged = 0;
  };
  std::vector<Acc> acc;
  for (const TrialRow& t : trials) {
    const auto key = std::make_pair(format_double(t.value), t.seed);
    auto it = slot.find(key);
    if (it == slot.end()) {
      it = slot.emplace(key, out.size()).first;
      AggregateRow a;
      a.config_hash = t.config_hash;
      a.value = t.value;
      a.seed = t.seed;
      out.push_back(a);
      acc.emplace_back();
    }
    AggregateRow& a = out[it->second];
    Acc& s = acc[it->second];
    ++a.trials;
    if (t.status != TrialStatus::kOk) continue;
    ++a.ok_trials;
    if (t.converged) ++s.converged;
    s.sp += t.err_p * t.err_p;
    s.sv += t.err_v * t.err_v;
    s.so += t.err_o * t.err_o;
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 0; i < out.size(); ++i) {
    AggregateRow& a = out[i];
    const Acc& s = acc[i];
    a.convergence_rate = static_cast<double>(s.converged) / a.trials;
    a.rmse_p = a.ok_trials ? std::sqrt(s.sp / a.ok_trials) : nan;
    a.rmse_v = a.ok_trials ? std::sqrt(s.sv / a.ok_trials) : nan;
    a.rmse_o = a.ok_trials ? std::sqrt(s.so / a.ok_trials) : nan;
    a.peb = a.veb = a.oeb = nan;
    for (const BoundsRow& b : bounds)
      if (b.seed == a.seed && b.value == a.value) {
        a.peb = b.peb;
        a.veb = b.veb;
        a.oeb = b.oeb;
        break;
      }
    a.ratio_p = a.rmse_p / a.peb;
    a.ratio_v = a.rmse_v / a.veb;
    a.ratio_o = a.rmse_o / a.oeb;
  }
  return out;
}

CampaignResult run_estimation_campaign(const SweepSpec& spec, const ScenarioConfig& base) {
  const std::vector<Point> pts = expand(spec, base);
  CampaignResult out;
  out.base_hash = config_hash(base);
  out.bounds.resize(pts.size());
  parallel_for(static_cast<int>(pts.size()), spec.workers,
               [&](int i) { out.bounds[i] = evaluate_point(pts[i].cfg, StudyMode::kBoundsOnly, pts[i].value); });

  const int T = spec.trials_per_point;
  const int n = static_cast<int>(pts.size()) * T;
  out.trials.resize(n);
  std::vector<double> elapsed(n, 0.0);
  parallel_for(n, spec.workers, [&](int i) {
    const Point& p = pts[i / T];
    const auto t0 = std::chrono::steady_clock::now();
    out.trials[i] = run_trial(p.cfg, p.value, i % T);
    elapsed[i] = seconds_since(t0);
  });
  out.aggregates = aggregate(out.trials, out.bounds);
  for (std::size_t p = 0; p < pts.size(); ++p) {
    double total = 0.0;
    for (int t = 0; t < T; ++t) total += elapsed[p * T + t];
    out.timing.push_back({pts[p].value, pts[p].seed, total});
  }
  return out;
}

CampaignResult run_doppler_only_study(const SweepSpec& spec, const ScenarioConfig& base) {
  const std::vector<Point> pts = expand(spec, base);
  CampaignResult out;
  out.base_hash = config_hash(base);
  out.doppler.resize(pts.size());
  out.timing.resize(pts.size());
  parallel_for(static_cast<int>(pts.size()), spec.workers, [&](int i) {
    const auto t0 = std::chrono::steady_clock::now();
    const BuiltScenario b = build_scenario(pts[i].cfg);
    DopplerStudyRow& r = out.doppler[i];
    r.config_hash = config_hash(pts[i].cfg);
    r.value = pts[i].value;
    r.seed = pts[i].seed;
    r.joint = row_from(b, pts[i].cfg, StudyMode::kBoundsOnly, pts[i].value);
    r.doppler = row_from(b, pts[i].cfg, StudyMode::kDopplerOnly, pts[i].value);
    r.ratio_p = r.doppler.peb / r.joint.peb;
    r.ratio_v = r.doppler.veb / r.joint.veb;
    r.ratio_o = r.doppler.oeb / r.joint.oeb;
    out.timing[i] = {pts[i].value, pts[i].seed, seconds_since(t0)};
  });
  return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

const char* kBoundsHeader =
    "config_hash,value,seed,mode,localizable,rank,cond,peb,veb,oeb,peb_sq,veb_sq,oeb_sq,fresnel_fraction";
const char* kTrialsHeader =
    "config_hash,value,seed,trial,trial_seed,status,converged,iterations,reason,cost,err_p,err_v,err_o,"
    "init_err_p,init_err_v,init_err_o";
const char* kAggregatesHeader =
    "config_hash,value,seed,trials,ok_trials,convergence_rate,rmse_p,rmse_v,rmse_o,peb,veb,oeb,ratio_p,ratio_v,ratio_o";

std::string f(double v) { return format_double(v); }

void bounds_fields(std::ostream& out, const BoundsRow& r) {
  out << to_string(r.mode) << ',' << (r.localizable ? 1 : 0) << ',' << r.rank << ',' << f(r.condition_number) << ','
      << f(r.peb) << ',' << f(r.veb) << ',' << f(r.oeb) << ',' << f(r.peb_sq) << ',' << f(r.veb_sq) << ','
      << f(r.oeb_sq) << ',' << f(r.fresnel_fraction);
}

void aggregate_line(std::ostream& out, const AggregateRow& a) {
  out << a.config_hash << ',' << f(a.value) << ',' << a.seed << ',' << a.trials << ',' << a.ok_trials << ','
      << f(a.convergence_rate) << ',' << f(a.rmse_p) << ',' << f(a.rmse_v) << ',' << f(a.rmse_o) << ',' << f(a.peb)
      << ',' << f(a.veb) << ',' << f(a.oeb) << ',' << f(a.ratio_p) << ',' << f(a.ratio_v) << ',' << f(a.ratio_o);
}

// Data rows of a versioned CSV, checked against the expected header.
std::vector<std::vector<std::string>> read_rows(std::istream& in, const char* header, std::size_t columns) {
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool seen_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!seen_header) {
      if (line != header) throw ConfigurationError("csv: unexpected header '" + line + "'");
      seen_header = true;
      continue;
    }
    auto fields = split_csv_line(line);
    if (fields.size() != columns) throw ConfigurationError("csv: wrong column count in '" + line + "'");
    rows.push_back(std::move(fields));
  }
  if (!seen_header) throw ConfigurationError("csv: missing header");
  return rows;
}

std::uint64_t to_u64(const std::string& s) {
  std::size_t pos = 0;
  const unsigned long long v = std::stoull(s, &pos);
  if (pos != s.size()) throw ConfigurationError("csv: bad integer '" + s + "'");
  return v;
}

TrialStatus parse_status(const std::string& s) {
  for (auto st : {TrialStatus::kOk, TrialStatus::kInitializerFailed, TrialStatus::kNumericalFailure})
    if (s == to_string(st)) return st;
  throw ConfigurationError("csv: unknown trial status '" + s + "'");
}

}  // namespace

void write_bounds_csv(std::ostream& out, const std::vector<BoundsRow>& rows) {
  out << "# nfloc bounds v1 code=" << kCodeVersion << "\n" << kBoundsHeader << "\n";
  for (const auto& r : rows) {
    out << r.config_hash << ',' << f(r.value) << ',' << r.seed << ',';
    bounds_fields(out, r);
    out << "\n";
  }
}

void write_trials_csv(std::ostream& out, const std::vector<TrialRow>& rows) {
  out << "# nfloc trials v1 code=" << kCodeVersion << "\n" << kTrialsHeader << "\n";
  for (const auto& r : rows)
    out << r.config_hash << ',' << f(r.value) << ',' << r.seed << ',' << r.trial << ',' << r.trial_seed << ','
        << to_string(r.status) << ',' << (r.converged ? 1 : 0) << ',' << r.iterations << ',' << r.reason << ','
        << f(r.cost) << ',' << f(r.err_p) << ',' << f(r.err_v) << ',' << f(r.err_o) << ',' << f(r.init_err_p) << ','
        << f(r.init_err_v) << ',' << f(r.init_err_o) << "\n";
}

void write_aggregates_csv(std::ostream& out, const std::vector<AggregateRow>& rows) {
  out << "# nfloc aggregates v1 code=" << kCodeVersion << "\n" << kAggregatesHeader << "\n";
  for (const auto& a : rows) {
    aggregate_line(out, a);
    out << "\n";
  }
}

void write_doppler_csv(std::ostream& out, const std::vector<DopplerStudyRow>& rows) {
  out << "# nfloc doppler-study v1 code=" << kCodeVersion << "\n"
      << "config_hash,value,seed,joint_localizable,joint_rank,joint_peb,joint_veb,joint_oeb,"
         "doppler_localizable,doppler_rank,doppler_peb,doppler_veb,doppler_oeb,ratio_p,ratio_v,ratio_o\n";
  for (const auto& r : rows)
    out << r.config_hash << ',' << f(r.value) << ',' << r.seed << ',' << (r.joint.localizable ? 1 : 0) << ','
        << r.joint.rank << ',' << f(r.joint.peb) << ',' << f(r.joint.veb) << ',' << f(r.joint.oeb) << ','
        << (r.doppler.localizable ? 1 : 0) << ',' << r.doppler.rank << ',' << f(r.doppler.peb) << ','
        << f(r.doppler.veb) << ',' << f(r.doppler.oeb) << ',' << f(r.ratio_p) << ',' << f(r.ratio_v) << ','
        << f(r.ratio_o) << "\n";
}

void write_timing_csv(std::ostream& out, const std::vector<TimingRow>& rows) {
  out << "# nfloc timing v1\nvalue,seed,wall_time_s\n";
  for (const auto& r : rows) out << f(r.value) << ',' << r.seed << ',' << f(r.wall_time_s) << "\n";
}

std::vector<TrialRow> read_trials_csv(std::istream& in) {
  std::vector<TrialRow> out;
  for (const auto& c : read_rows(in, kTrialsHeader, 16)) {
    TrialRow r;
    r.config_hash = c[0];
    r.value = parse_double(c[1]);
    r.seed = to_u64(c[2]);
    r.trial = static_cast<int>(to_u64(c[3]));
    r.trial_seed = to_u64(c[4]);
    r.status = parse_status(c[5]);
    r.converged = c[6] == "1";
    r.iterations = static_cast<int>(to_u64(c[7]));
    r.reason = c[8];
    r.cost = parse_double(c[9]);
    r.err_p = parse_double(c[10]);
    r.err_v = parse_double(c[11]);
    r.err_o = parse_double(c[12]);
    r.init_err_p = parse_double(c[13]);
    r.init_err_v = parse_double(c[14]);
    r.init_err_o = parse_double(c[15]);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<AggregateRow> read_aggregates_csv(std::istream& in) {
  std::vector<AggregateRow> out;
  for (const auto& c : read_rows(in, kAggregatesHeader, 15)) {
    AggregateRow a;
    a.config_hash = c[0];
    a.value = parse_double(c[1]);
    a.seed = to_u64(c[2]);
    a.trials = static_cast<int>(to_u64(c[3]));
    a.ok_trials = static_cast<int>(to_u64(c[4]));
    a.convergence_rate = parse_double(c[5]);
    a.rmse_p = parse_double(c[6]);
    a.rmse_v = parse_double(c[7]);
    a.rmse_o = parse_double(c[8]);
    a.peb = parse_double(c[9]);
    a.veb = parse_double(c[10]);
    a.oeb = parse_double(c[11]);
    a.ratio_p = parse_double(c[12]);
    a.ratio_v = parse_double(c[13]);
    a.ratio_o = parse_double(c[14]);
    out.push_back(std::move(a));
  }
  return out;
}

VerifyReport verify(std::istream& trials_in, std::istream& aggregates_in) {
  VerifyReport rep;
  const std::vector<TrialRow> trials = read_trials_csv(trials_in);
  const std::vector<AggregateRow> stored = read_aggregates_csv(aggregates_in);
  // Bounds are not part of the raw trial file; take them from the stored rows.
  std::vector<BoundsRow> bounds;
  for (const auto& a : stored) {
    BoundsRow b;
    b.value = a.value;
    b.seed = a.seed;
    b.peb = a.peb;
    b.veb = a.veb;
    b.oeb = a.oeb;
    bounds.push_back(b);
  }
  const std::vector<AggregateRow> recomputed = aggregate(trials, bounds);
  if (recomputed.size() != stored.size()) {
    rep.ok = false;
    rep.mismatches.push_back("aggregate row count " + std::to_string(stored.size()) + " vs recomputed " +
                             std::to_string(recomputed.size()));
    return rep;
  }
  for (std::size_t i = 0; i < stored.size(); ++i) {
    std::ostringstream a, b;
    aggregate_line(a, stored[i]);
    aggregate_line(b, recomputed[i]);
    ++rep.rows_checked;
    if (a.str() != b.str()) {
      rep.ok = false;
      rep.mismatches.push_back("row " + std::to_string(i + 1) + ": stored '" + a.str() + "' recomputed '" + b.str() +
                               "'");
    }
  }
  return rep;
}

}  // namespace nfloc
