#include "nfloc/config.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "nfloc/channel.hpp"
#include "nfloc/csv.hpp"

namespace nfloc {

namespace pt = boost::property_tree;

namespace {

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s = {
      {"anchors",
       {"count", "radius_m", "speed_mps", "velocity_mode", "clock_offset_sd_s", "frequency_offset_sd_hz",
        "min_distance_m"}},
      {"receiver", {"center_m", "speed_mps", "velocity_mps", "orientation"}},
      {"array", {"num_elements", "element_spacing_m", "reference_index"}},
      {"slots", {"num_slots", "slot_spacing_s"}},
      {"waveform", {"kind", "rolloff", "bandwidth_hz", "zero_crossing_time_s", "carrier_hz"}},
      {"noise",
       {"snr_db", "pathloss_exponent", "doppler_fim_includes_energy", "offset_convention", "per_triple_sigma"}},
      {"seed", {"value"}},
      {"solver", {"max_outer_iters", "direction", "profile_offsets", "multi_start", "cost_tolerance"}},
      {"initializer", {"index_set_size"}},
  };
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  const auto e = s.find_last_not_of(" \t");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    return parse_double(trim(v));
  } catch (const std::exception&) {
    throw ConfigurationError("config: '" + key + "' expects a number, got '" + v + "'");
  }
}

long long to_int(const std::string& key, const std::string& v) {
  const double d = to_double(key, v);
  if (d != static_cast<double>(static_cast<long long>(d)))
    throw ConfigurationError("config: '" + key + "' expects an integer, got '" + v + "'");
  return static_cast<long long>(d);
}

bool to_bool(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigurationError("config: '" + key + "' expects true/false, got '" + v + "'");
}

Vec3 to_vec3(const std::string& key, const std::string& v) {
  std::vector<std::string> parts = split_csv_line(v);
  if (parts.size() != 3) throw ConfigurationError("config: '" + key + "' expects three comma-separated numbers");
  return Vec3(to_double(key, parts[0]), to_double(key, parts[1]), to_double(key, parts[2]));
}

std::string vec3_string(const Vec3& v) {
  return format_double(v.x()) + "," + format_double(v.y()) + "," + format_double(v.z());
}

void apply(ScenarioConfig& c, const std::string& section, const std::string& key, const std::string& value) {
  const auto& sch = schema();
  const auto sit = sch.find(section);
  if (sit == sch.end()) throw ConfigurationError("config: unknown section [" + section + "]");
  if (!sit->second.count(key)) throw ConfigurationError("config: unknown key '" + key + "' in [" + section + "]");
  const std::string full = section + "." + key;
  if (section == "anchors") {
    if (key == "count") c.num_anchors = static_cast<int>(to_int(full, value));
    else if (key == "radius_m") c.anchor_radius = to_double(full, value);
    else if (key == "speed_mps") c.anchor_speed = to_double(full, value);
    else if (key == "velocity_mode") {
      const std::string v = trim(value);
      if (v == "constant") c.anchor_velocity_mode = AnchorVelocityMode::kConstant;
      else if (v == "distinct") c.anchor_velocity_mode = AnchorVelocityMode::kDistinct;
      else if (v == "same_direction") c.anchor_velocity_mode = AnchorVelocityMode::kSameDirection;
      else throw ConfigurationError("config: anchors.velocity_mode must be constant, distinct or same_direction");
    } else if (key == "clock_offset_sd_s") c.clock_offset_sd = to_double(full, value);
    else if (key == "frequency_offset_sd_hz") c.frequency_offset_sd = to_double(full, value);
    else if (key == "min_distance_m") c.anchor_min_distance = to_double(full, value);
  } else if (section == "receiver") {
    if (key == "center_m") c.center = to_vec3(full, value);
    else if (key == "speed_mps") c.receiver_speed = to_double(full, value);
    else if (key == "velocity_mps") c.receiver_velocity = to_vec3(full, value);
    else if (key == "orientation") c.orientation = to_vec3(full, value);
  } else if (section == "array") {
    if (key == "num_elements") c.num_elements = static_cast<int>(to_int(full, value));
    else if (key == "element_spacing_m") c.element_spacing = to_double(full, value);
    else if (key == "reference_index") c.reference_index = static_cast<int>(to_int(full, value));
  } else if (section == "slots") {
    if (key == "num_slots") c.num_slots = static_cast<int>(to_int(full, value));
    else if (key == "slot_spacing_s") c.slot_spacing = to_double(full, value);
  } else if (section == "waveform") {
    if (key == "kind") {
      if (trim(value) != "raised_cosine")
        throw ConfigurationError("config: waveform.kind supports raised_cosine in configuration files");
      c.waveform_kind = PulseKind::kRaisedCosine;
    } else if (key == "rolloff") c.rolloff = to_double(full, value);
    else if (key == "bandwidth_hz") c.bandwidth = to_double(full, value);
    else if (key == "zero_crossing_time_s") c.zero_crossing_time = to_double(full, value);
    else if (key == "carrier_hz") c.carrier_frequency = to_double(full, value);
  } else if (section == "noise") {
    if (key == "snr_db") c.snr_db = to_double(full, value);
    else if (key == "pathloss_exponent") c.pathloss_exponent = to_double(full, value);
    else if (key == "doppler_fim_includes_energy") c.doppler_fim_includes_energy = to_bool(full, value);
    else if (key == "offset_convention") {
      const std::string v = trim(value);
      if (v == "model") c.offset_convention = OffsetConvention::kModel;
      else if (v == "first_element") c.offset_convention = OffsetConvention::kFirstElement;
      else throw ConfigurationError("config: noise.offset_convention must be model or first_element");
    } else if (key == "per_triple_sigma") c.per_triple_sigma = to_bool(full, value);
  } else if (section == "seed") {
    const long long s = to_int(full, value);
    if (s < 0) throw ConfigurationError("config: seed must be non-negative");
    c.seed = static_cast<std::uint64_t>(s);
  } else if (section == "solver") {
    if (key == "max_outer_iters") c.solver.max_outer_iters = static_cast<int>(to_int(full, value));
    else if (key == "direction") {
      const std::string v = trim(value);
      if (v == "gauss_newton") c.solver.direction = BlockDirection::kGaussNewton;
      else if (v == "steepest_descent") c.solver.direction = BlockDirection::kSteepestDescent;
      else throw ConfigurationError("config: solver.direction must be gauss_newton or steepest_descent");
    } else if (key == "profile_offsets") c.solver.profile_offsets = to_bool(full, value);
    else if (key == "multi_start") c.solver.multi_start = static_cast<int>(to_int(full, value));
    else if (key == "cost_tolerance") c.solver.cost_tolerance = to_double(full, value);
  } else if (section == "initializer") {
    if (key == "index_set_size") c.index_set_size = static_cast<int>(to_int(full, value));
  }
}

void apply_override(ScenarioConfig& c, const std::string& ov) {
  const auto eq = ov.find('=');
  const auto dot = ov.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq)
    throw ConfigurationError("config: override '" + ov + "' must look like section.key=value");
  apply(c, trim(ov.substr(0, dot)), trim(ov.substr(dot + 1, eq - dot - 1)), ov.substr(eq + 1));
}

const char* velocity_mode_name(AnchorVelocityMode m) {
  switch (m) {
    case AnchorVelocityMode::kDistinct: return "distinct";
    case AnchorVelocityMode::kSameDirection: return "same_direction";
    case AnchorVelocityMode::kConstant: break;
  }
  return "constant";
}

}  // namespace

void ScenarioConfig::validate() const {
  if (num_anchors < 1) throw ConfigurationError("config: anchors.count must be at least 1");
  if (!(anchor_radius > anchor_min_distance)) throw ConfigurationError("config: anchors.radius_m must exceed min_distance_m");
  if (!(anchor_speed >= 0.0) || !(receiver_speed >= 0.0)) throw ConfigurationError("config: speeds must be non-negative");
  if (!(clock_offset_sd >= 0.0) || !(frequency_offset_sd >= 0.0))
    throw ConfigurationError("config: offset spreads must be non-negative");
  if (num_elements < 2) throw ConfigurationError("config: array.num_elements must be at least 2");
  if (element_spacing < 0.0) throw ConfigurationError("config: array.element_spacing_m must be positive");
  if (reference_index < 0 || reference_index > num_elements)
    throw ConfigurationError("config: array.reference_index must lie in [1, num_elements]");
  if (num_slots < 1 || !(slot_spacing > 0.0)) throw ConfigurationError("config: invalid slot plan");
  if (!(rolloff > 0.0 && rolloff <= 1.0)) throw ConfigurationError("config: waveform.rolloff must lie in (0, 1]");
  if (!(bandwidth > 0.0) && !(zero_crossing_time > 0.0))
    throw ConfigurationError("config: waveform needs bandwidth_hz or zero_crossing_time_s");
  if (!(carrier_frequency > 0.0)) throw ConfigurationError("config: waveform.carrier_hz must be positive");
  if (!(pathloss_exponent > 0.0)) throw ConfigurationError("config: noise.pathloss_exponent must be positive");
  if (index_set_size < 2) throw ConfigurationError("config: initializer.index_set_size must be at least 2");
  if (orientation && !(orientation->norm() > 0.0)) throw ConfigurationError("config: receiver.orientation must be non-zero");
  solver.validate();
}

ScenarioConfig parse_config(std::istream& in, const std::vector<std::string>& overrides) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigurationError(std::string("config: ") + e.what());
  }
  ScenarioConfig c;
  for (const auto& [section, body] : tree) {
    if (!body.data().empty() && body.empty())
      throw ConfigurationError("config: key '" + section + "' outside any section");
    for (const auto& [key, value] : body) apply(c, section, key, value.data());
  }
  for (const auto& ov : overrides) apply_override(c, ov);
  c.validate();
  return c;
}

ScenarioConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream f(path);
  if (!f) throw ConfigurationError("config: cannot open '" + path + "'");
  return parse_config(f, overrides);
}

ScenarioConfig config_from_overrides(const std::vector<std::string>& overrides) {
  std::istringstream empty;
  return parse_config(empty, overrides);
}

std::string canonical_config(const ScenarioConfig& c) {
  std::ostringstream os;
  os << "[anchors]\ncount=" << c.num_anchors << "\nradius_m=" << format_double(c.anchor_radius)
     << "\nspeed_mps=" << format_double(c.anchor_speed) << "\nvelocity_mode=" << velocity_mode_name(c.anchor_velocity_mode)
     << "\nclock_offset_sd_s=" << format_double(c.clock_offset_sd)
     << "\nfrequency_offset_sd_hz=" << format_double(c.frequency_offset_sd)
     << "\nmin_distance_m=" << format_double(c.anchor_min_distance) << "\n";
  os << "[receiver]\ncenter_m=" << vec3_string(c.center) << "\nspeed_mps=" << format_double(c.receiver_speed) << "\n";
  if (c.receiver_velocity) os << "velocity_mps=" << vec3_string(*c.receiver_velocity) << "\n";
  if (c.orientation) os << "orientation=" << vec3_string(*c.orientation) << "\n";
  os << "[array]\nnum_elements=" << c.num_elements << "\nelement_spacing_m=" << format_double(c.element_spacing)
     << "\nreference_index=" << c.reference_index << "\n";
  os << "[slots]\nnum_slots=" << c.num_slots << "\nslot_spacing_s=" << format_double(c.slot_spacing) << "\n";
  os << "[waveform]\nkind=raised_cosine\nrolloff=" << format_double(c.rolloff)
     << "\nbandwidth_hz=" << format_double(c.bandwidth) << "\nzero_crossing_time_s=" << format_double(c.zero_crossing_time)
     << "\ncarrier_hz=" << format_double(c.carrier_frequency) << "\n";
  os << "[noise]\nsnr_db=" << format_double(c.snr_db) << "\npathloss_exponent=" << format_double(c.pathloss_exponent)
     << "\ndoppler_fim_includes_energy=" << (c.doppler_fim_includes_energy ? "true" : "false")
     << "\noffset_convention=" << (c.offset_convention == OffsetConvention::kFirstElement ? "first_element" : "model")
     << "\nper_triple_sigma=" << (c.per_triple_sigma ? "true" : "false") << "\n";
  os << "[seed]\nvalue=" << c.seed << "\n";
  os << "[solver]\nmax_outer_iters=" << c.solver.max_outer_iters
     << "\ndirection=" << (c.solver.direction == BlockDirection::kGaussNewton ? "gauss_newton" : "steepest_descent")
     << "\nprofile_offsets=" << (c.solver.profile_offsets ? "true" : "false")
     << "\nmulti_start=" << c.solver.multi_start << "\ncost_tolerance=" << format_double(c.solver.cost_tolerance) << "\n";
  os << "[initializer]\nindex_set_size=" << c.index_set_size << "\n";
  return os.str();
}

std::string config_hash(const ScenarioConfig& cfg) { return hex64(fnv1a64(canonical_config(cfg))); }

Waveform make_waveform(const ScenarioConfig& cfg) {
  Waveform w = Waveform::raised_cosine(cfg.rolloff, cfg.bandwidth > 0.0 ? cfg.bandwidth : 1.0, cfg.carrier_frequency);
  if (cfg.zero_crossing_time > 0.0) w.zero_crossing_time = cfg.zero_crossing_time;
  w.validate();
  return w;
}

BuiltScenario build_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  BuiltScenario out;
  Scenario& s = out.scenario;
  s.waveform = make_waveform(cfg);
  s.pathloss_exponent = cfg.pathloss_exponent;
  s.array.num_elements = cfg.num_elements;
  s.array.element_spacing = cfg.element_spacing > 0.0 ? cfg.element_spacing : s.waveform.wavelength() / 2.0;
  s.array.reference_index = (cfg.reference_index > 0 ? cfg.reference_index : (cfg.num_elements + 1) / 2) - 1;
  s.slots.num_slots = cfg.num_slots;
  s.slots.slot_spacing = cfg.slot_spacing;

  s.receiver.orientation = cfg.orientation ? cfg.orientation->normalized() : random_unit_vector(cfg.seed, 0x6f7269ULL);
  s.receiver.velocity =
      cfg.receiver_velocity ? *cfg.receiver_velocity : cfg.receiver_speed * random_unit_vector(cfg.seed, 0x76656cULL);
  // The array midpoint sits at the configured center.
  const double mid = 0.5 * (cfg.num_elements - 1);
  s.receiver.position0 = cfg.center - (mid - s.array.reference_index) * s.array.element_spacing * s.receiver.orientation;

  AnchorPlacement ap;
  ap.count = cfg.num_anchors;
  ap.center = cfg.center;
  ap.radius = cfg.anchor_radius;
  ap.speed = cfg.anchor_speed;
  ap.velocity_mode = cfg.anchor_velocity_mode;
  ap.clock_offset_sd = cfg.clock_offset_sd;
  ap.frequency_offset_sd = cfg.frequency_offset_sd;
  ap.min_distance = cfg.anchor_min_distance;
  const Vec3 first = s.receiver.position0 + s.array.offset(0) * s.receiver.orientation;
  const Vec3 last = s.receiver.position0 + s.array.offset(cfg.num_elements - 1) * s.receiver.orientation;
  const double keep_out = cfg.anchor_min_distance;
  auto clear_of_array = [first, last, keep_out](const Vec3& p) {
    const Vec3 seg = last - first;
    const double t = std::clamp((p - first).dot(seg) / seg.squaredNorm(), 0.0, 1.0);
    return (p - (first + t * seg)).norm() >= keep_out;
  };
  s.anchors = sample_anchors(ap, cfg.num_slots, cfg.seed, clear_of_array);

  out.stats = compute_stats(s.waveform);
  const GeometryTable g = build_geometry(s.anchors, s.receiver, s.array, s.slots);
  s.noise_psd = calibrate_noise_psd(s, g, out.stats.energy, db_to_linear(cfg.snr_db));
  s.validate();

  out.fim.doppler_fim_includes_energy = cfg.doppler_fim_includes_energy;
  out.fim.offset_convention = cfg.offset_convention;
  out.initializer.default_set_size = cfg.index_set_size;
  return out;
}

}  // namespace nfloc
