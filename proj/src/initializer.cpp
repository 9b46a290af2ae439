#include "nfloc/initializer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "nfloc/channel.hpp"
#include "nfloc/fisher.hpp"

namespace nfloc {

namespace {

// Least squares with column equilibration and an explicit conditioning check.
Eigen::VectorXd solve_checked(const Eigen::MatrixXd& a, const Eigen::VectorXd& rhs, double max_condition,
                              const char* what) {
  Eigen::VectorXd scale(a.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    const double n = a.col(j).norm();
    scale(j) = n > 0.0 ? 1.0 / n : 1.0;
  }
  const Eigen::MatrixXd as = a * scale.asDiagonal();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(as, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double smax = sv.size() ? sv(0) : 0.0;
  const double smin = sv.size() ? sv(sv.size() - 1) : 0.0;
  const double cond = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
  if (a.rows() < a.cols() || !(cond <= max_condition)) {
    std::ostringstream os;
    os << what << ": linear system is rank deficient or ill-conditioned (rows " << a.rows() << ", cols "
       << a.cols() << ", condition " << cond << ")";
    throw InitializerFailure(os.str());
  }
  return scale.asDiagonal() * svd.solve(rhs);
}

}  // namespace

std::vector<int> default_index_set(int num_elements, int count) {
  require(num_elements >= 2, "default_index_set: need at least two elements");
  count = std::clamp(count, 2, num_elements);
  std::vector<int> idx;
  for (int i = 0; i < count; ++i) {
    const int u = static_cast<int>(std::lround(static_cast<double>(i) * (num_elements - 1) / (count - 1)));
    if (idx.empty() || idx.back() != u) idx.push_back(u);
  }
  return idx;
}

Vec3 tdoa_element_fix(std::span<const double> delays, std::span<const Vec3> anchor_positions, double max_condition) {
  const std::size_t nb = anchor_positions.size();
  require(delays.size() == nb, "tdoa_element_fix: one delay per anchor");
  if (nb < 4) throw InitializerFailure("tdoa_element_fix: at least four anchors are required");

  // Coordinates relative to the first anchor; ranges relative to its range r0.
  const Vec3 origin = anchor_positions[0];
  const std::size_t m = nb - 1;
  Eigen::MatrixXd a(static_cast<Eigen::Index>(m), 3);
  Eigen::VectorXd dr(static_cast<Eigen::Index>(m));
  Eigen::VectorXd h(static_cast<Eigen::Index>(m));
  for (std::size_t b = 1; b < nb; ++b) {
    const Vec3 rel = anchor_positions[b] - origin;
    const Eigen::Index i = static_cast<Eigen::Index>(b - 1);
    const double d = kSpeedOfLight * (delays[b] - delays[0]);
    a.row(i) = 2.0 * rel.transpose();
    dr(i) = d;
    h(i) = rel.squaredNorm() - d * d;
  }
  // 2 rel_b . x + 2 dr_b r0 = |rel_b|^2 - dr_b^2, with |x| = r0.
  if (nb >= 5) {
    Eigen::MatrixXd full(static_cast<Eigen::Index>(m), 4);
    full << a, 2.0 * dr;
    const Eigen::VectorXd sol = solve_checked(full, h, max_condition, "tdoa_element_fix");
    return origin + sol.head<3>();
  }
  // Four anchors: x = mu - nu r0, then the range constraint fixes r0.
  const Eigen::Matrix3d a3 = a;
  const Vec3 mu = solve_checked(a3, h, max_condition, "tdoa_element_fix");
  const Vec3 nu = solve_checked(a3, 2.0 * dr, max_condition, "tdoa_element_fix");
  const double qa = nu.squaredNorm() - 1.0;
  const double qb = -2.0 * mu.dot(nu);
  const double qc = mu.squaredNorm();
  std::vector<double> roots;
  if (std::abs(qa) < 1e-14) {
    if (qb != 0.0) roots.push_back(-qc / qb);
  } else {
    const double disc = qb * qb - 4.0 * qa * qc;
    if (disc >= 0.0) {
      const double sq = std::sqrt(disc);
      roots.push_back((-qb + sq) / (2.0 * qa));
      roots.push_back((-qb - sq) / (2.0 * qa));
    } else {
      roots.push_back(-qb / (2.0 * qa));  // noise pushed the roots off the real line
    }
  }
  // Two admissible roots are genuinely ambiguous; prefer the fix nearer the
  // anchors' centroid.
  Vec3 centroid = Vec3::Zero();
  for (const Vec3& p : anchor_positions) centroid += p;
  centroid /= static_cast<double>(nb);
  Vec3 best = Vec3::Constant(std::numeric_limits<double>::quiet_NaN());
  double best_dist = std::numeric_limits<double>::infinity();
  for (double r0 : roots) {
    if (!(r0 >= 0.0)) continue;
    const Vec3 x = origin + mu - nu * r0;
    const double dist = (x - centroid).norm();
    if (dist < best_dist) {
      best_dist = dist;
      best = x;
    }
  }
  if (!best.allFinite()) throw InitializerFailure("tdoa_element_fix: no admissible range root with four anchors");
  return best;
}

Vec3 orientation_init(const ElementFixes& fixes, const std::vector<int>& index_set, int num_slots) {
  if (index_set.size() < 2) throw InitializerFailure("orientation_init: index set needs at least two elements");
  Vec3 sum = Vec3::Zero();
  Vec3 low_to_high = Vec3::Zero();
  const auto [lo, hi] = std::minmax_element(index_set.begin(), index_set.end());
  const double norm = static_cast<double>(num_slots) * static_cast<double>(index_set.size());
  for (int k = 0; k < num_slots; ++k) {
    for (std::size_t j = 1; j < index_set.size(); ++j)
      sum += (fixes.at({index_set[j], k}) - fixes.at({index_set[j - 1], k})) / norm;
    low_to_high += fixes.at({*hi, k}) - fixes.at({*lo, k});
  }
  if (!(sum.norm() > 0.0)) throw InitializerFailure("orientation_init: element fixes do not separate");
  Vec3 s = sum.normalized();
  if (s.dot(low_to_high) < 0.0) s = -s;
  return s;
}

Vec3 velocity_init_from_fixes(const ElementFixes& fixes, const std::vector<int>& index_set, const SlotPlan& plan) {
  if (plan.num_slots < 2) throw InitializerFailure("velocity_init: finite differences need two slots");
  Vec3 v = Vec3::Zero();
  const double norm = (plan.num_slots - 1) * plan.slot_spacing * static_cast<double>(index_set.size());
  for (int k = 1; k < plan.num_slots; ++k)
    for (int i : index_set) v += (fixes.at({i, k}) - fixes.at({i, k - 1})) / norm;
  return v;
}

Vec3 velocity_init_from_doppler(const MeasurementSet& meas, const Scenario& scenario, const ElementFixes& fixes,
                                const std::vector<int>& index_set, double max_condition) {
  const int nb = scenario.num_anchors();
  const double fc = scenario.waveform.carrier_frequency;
  const std::size_t rows = static_cast<std::size_t>(nb) * index_set.size();
  Eigen::MatrixXd a(static_cast<Eigen::Index>(rows), 3);
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(rows));
  Eigen::Index r = 0;
  for (int b = 0; b < nb; ++b) {
    const Anchor& an = scenario.anchors[static_cast<std::size_t>(b)];
    const Vec3 ap = an.position(0, scenario.slots.slot_spacing);
    const Vec3& av = an.velocity_per_slot.front();
    for (int i : index_set) {
      const Vec3 dir = (ap - fixes.at({i, 0})).normalized();
      // c (1 - f/f_c) = (v_anchor - v) . dir
      const double radial = kSpeedOfLight * (1.0 - meas.doppler_meas[meas.index(b, i, 0)] / fc);
      a.row(r) = -dir.transpose();
      rhs(r) = radial - av.dot(dir);
      ++r;
    }
  }
  return solve_checked(a, rhs, max_condition, "velocity_init_from_doppler");
}

Vec3 position_init(const ElementFixes& fixes, const std::vector<int>& index_set, const Vec3& velocity,
                   const Vec3& orientation, const ArraySpec& array, const SlotPlan& plan) {
  Vec3 p = Vec3::Zero();
  const double norm = plan.num_slots * static_cast<double>(index_set.size());
  for (int k = 0; k < plan.num_slots; ++k)
    for (int i : index_set)
      p += (fixes.at({i, k}) - plan.elapsed(k) * velocity - array.offset(i) * orientation) / norm;
  return p;
}

std::pair<std::vector<double>, std::vector<double>> offset_init(const MeasurementSet& meas,
                                                                const Scenario& scenario,
                                                                const MotionState& state) {
  const int nb = scenario.num_anchors();
  const std::vector<double> zero(static_cast<std::size_t>(nb), 0.0);
  const GeometryTable g = build_geometry(scenario.anchors, state, scenario.array, scenario.slots);
  const ChannelParams model = compute_channel(scenario, g, zero, zero);
  std::vector<double> clock(static_cast<std::size_t>(nb), 0.0), freq(static_cast<std::size_t>(nb), 0.0);
  const TripleIndexer& ix = g.index;
  const double n = static_cast<double>(ix.per_anchor());
  for (int b = 0; b < nb; ++b) {
    for (int k = 0; k < ix.num_slots; ++k)
      for (int u = 0; u < ix.num_elements; ++u) {
        const std::size_t t = ix(b, u, k);
        clock[static_cast<std::size_t>(b)] += (meas.delay_meas[t] - model.delay[t]) / n;
        freq[static_cast<std::size_t>(b)] += (meas.doppler_meas[t] - model.doppler_freq[t]) / n;
      }
  }
  return {clock, freq};
}

namespace {

// Delay-only cost at the first slot over the index set with clock offsets
// profiled out; used to rank grid candidates.
double grid_cost(const MeasurementSet& meas, const Scenario& scenario, const std::vector<int>& index_set,
                 const Vec3& p, const Vec3& s) {
  double cost = 0.0;
  for (int b = 0; b < scenario.num_anchors(); ++b) {
    const Vec3 ap = scenario.anchors[static_cast<std::size_t>(b)].position(0, scenario.slots.slot_spacing);
    double mean = 0.0;
    std::vector<double> r;
    for (int i : index_set) {
      const double d = (ap - (p + scenario.array.offset(i) * s)).norm();
      r.push_back(meas.delay_meas[meas.index(b, i, 0)] - d / kSpeedOfLight);
      mean += r.back();
    }
    mean /= static_cast<double>(r.size());
    for (double x : r) cost += (x - mean) * (x - mean);
  }
  return cost;
}

InitEstimate grid_fallback(const MeasurementSet& meas, const Scenario& scenario, const InitializerConfig& cfg,
                           const std::vector<int>& index_set) {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const Anchor& a : scenario.anchors) {
    lo = lo.cwiseMin(a.initial_position);
    hi = hi.cwiseMax(a.initial_position);
  }
  const double pad = 60.0;
  lo.array() -= pad;
  hi.array() += pad;
  // Fibonacci sphere directions, one hemisphere (the array axis sign is fixed later).
  std::vector<Vec3> dirs;
  const int nd = std::max(cfg.grid_directions, 4);
  for (int i = 0; i < nd; ++i) {
    const double z = 1.0 - (i + 0.5) / nd;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = i * kPi * (3.0 - std::sqrt(5.0));
    dirs.emplace_back(r * std::cos(phi), r * std::sin(phi), z);
  }
  const int n = std::max(cfg.grid_points_per_axis, 2);
  double best = std::numeric_limits<double>::infinity();
  Vec3 best_p = Vec3::Zero(), best_s = Vec3::UnitX();
  for (int ix = 0; ix < n; ++ix)
    for (int iy = 0; iy < n; ++iy)
      for (int iz = 0; iz < n; ++iz) {
        const Vec3 p = lo + (hi - lo).cwiseProduct(Vec3(ix, iy, iz) / (n - 1));
        for (const Vec3& s : dirs) {
          const double c = grid_cost(meas, scenario, index_set, p, s);
          if (c < best) {
            best = c;
            best_p = p;
            best_s = s;
          }
        }
      }
  InitEstimate est;
  est.position0 = best_p;
  est.orientation = best_s;
  est.velocity = Vec3::Zero();
  est.index_set = index_set;
  est.used_grid_fallback = true;
  return est;
}

void check_handoff(const InitEstimate& est, const InitializerConfig& cfg) {
  if (!est.position0.allFinite() || !est.velocity.allFinite() || !est.orientation.allFinite())
    throw InitializerFailure("initializer produced non-finite values");
  if (std::abs(est.orientation.norm() - 1.0) > 1e-12) throw InitializerFailure("initializer orientation not unit norm");
  for (double d : est.clock_offset)
    if (!(std::abs(d) <= cfg.max_clock_offset)) throw InitializerFailure("initial clock offset outside plausibility window");
  for (double e : est.frequency_offset)
    if (!(std::abs(e) <= cfg.max_frequency_offset))
      throw InitializerFailure("initial frequency offset outside plausibility window");
}

}  // namespace

InitEstimate initialize(const MeasurementSet& meas, const Scenario& scenario, const InitializerConfig& cfg) {
  const int nb = scenario.num_anchors();
  const int nk = scenario.slots.num_slots;
  std::vector<int> index_set = cfg.index_set.empty()
                                   ? default_index_set(scenario.array.num_elements, cfg.default_set_size)
                                   : cfg.index_set;
  for (int i : index_set)
    require(i >= 0 && i < scenario.array.num_elements, "initialize: index set entry out of range");
  if (index_set.size() < 2) throw InitializerFailure("initialize: index set needs at least two elements");

  InitEstimate est;
  if (nb < 4) {
    if (!cfg.allow_grid_fallback)
      throw InitializerFailure("initialize: fewer than four anchors and the grid fallback is disabled");
    est = grid_fallback(meas, scenario, cfg, index_set);
  } else {
    est.index_set = index_set;
    for (int k = 0; k < nk; ++k) {
      std::vector<Vec3> anchors;
      for (const Anchor& a : scenario.anchors) anchors.push_back(a.position(k, scenario.slots.slot_spacing));
      for (int i : index_set) {
        std::vector<double> delays;
        for (int b = 0; b < nb; ++b) delays.push_back(meas.delay_meas[meas.index(b, i, k)]);
        est.element_fixes[{i, k}] = tdoa_element_fix(delays, anchors, cfg.max_condition);
      }
    }
    est.orientation = orientation_init(est.element_fixes, index_set, nk);
    const bool use_fixes = cfg.velocity_mode == VelocityInitMode::kFixes ||
                           (cfg.velocity_mode == VelocityInitMode::kAuto && nk >= 2);
    est.velocity = use_fixes ? velocity_init_from_fixes(est.element_fixes, index_set, scenario.slots)
                             : velocity_init_from_doppler(meas, scenario, est.element_fixes, index_set,
                                                          cfg.max_condition);
    est.position0 = position_init(est.element_fixes, index_set, est.velocity, est.orientation, scenario.array,
                                  scenario.slots);
  }
  MotionState state{est.position0, est.velocity, est.orientation};
  std::tie(est.clock_offset, est.frequency_offset) = offset_init(meas, scenario, state);
  check_handoff(est, cfg);
  return est;
}

}  // namespace nfloc
