#include "nfloc/estimator.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

#include "nfloc/channel.hpp"
#include "nfloc/fisher.hpp"
#include "nfloc/linalg.hpp"
#include "nfloc/random.hpp"

namespace nfloc {

const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::kCostTolerance: return "cost_tol";
    case StopReason::kStepTolerance: return "step_tol";
    case StopReason::kMaxIterations: return "max_iters";
    case StopReason::kNone: break;
  }
  return "none";
}

void SolverConfig::validate() const {
  if (max_outer_iters < 0) throw ConfigurationError("solver: max_outer_iters must be non-negative");
  if (!(cost_tolerance > 0.0) || !(step_tolerance > 0.0) || cost_patience < 1 || !(cost_floor >= 0.0))
    throw ConfigurationError("solver: tolerances must be positive");
  if (!(position_step > 0.0 && velocity_step > 0.0 && clock_step > 0.0 && frequency_step > 0.0 &&
        orientation_step > 0.0))
    throw ConfigurationError("solver: initial steps must be positive");
  if (!(backtracking > 0.0 && backtracking < 1.0)) throw ConfigurationError("solver: backtracking factor must lie in (0, 1)");
  if (!(armijo > 0.0 && armijo < 1.0)) throw ConfigurationError("solver: Armijo constant must lie in (0, 1)");
  if (multi_start < 0) throw ConfigurationError("solver: multi_start must be non-negative");
}

EstimateState state_from_init(const InitEstimate& init) {
  EstimateState s;
  s.position0 = init.position0;
  s.velocity = init.velocity;
  s.orientation = init.orientation.normalized();
  s.clock_offset = init.clock_offset;
  s.frequency_offset = init.frequency_offset;
  return s;
}

namespace {

// Measurement minus offset-free model prediction, per triple.
struct RawResiduals {
  bool valid = false;
  GeometryTable geometry;
  std::vector<double> tau;
  std::vector<double> f;
};

RawResiduals raw_residuals(const MotionState& m, const MeasurementSet& meas, const Scenario& scenario) {
  RawResiduals r;
  try {
    r.geometry = build_geometry(scenario.anchors, m, scenario.array, scenario.slots);
  } catch (const DegenerateGeometry&) {
    return r;
  }
  const TripleIndexer& ix = r.geometry.index;
  require(ix.size() == meas.delay_meas.size(), "estimator: measurements do not match the scenario");
  const double fc = scenario.waveform.carrier_frequency;
  r.tau.resize(ix.size());
  r.f.resize(ix.size());
  for (std::size_t t = 0; t < ix.size(); ++t) {
    const double nu = r.geometry.rel_velocity[t].dot(r.geometry.unit_dir[t]) / kSpeedOfLight;
    r.tau[t] = meas.delay_meas[t] - r.geometry.distance[t] / kSpeedOfLight;
    r.f[t] = meas.doppler_meas[t] - fc * (1.0 - nu);
  }
  r.valid = true;
  return r;
}

double weighted_cost(const RawResiduals& r, const MeasurementSet& meas, const std::vector<double>& clock,
                     const std::vector<double>& freq) {
  if (!r.valid) return std::numeric_limits<double>::infinity();
  const TripleIndexer& ix = r.geometry.index;
  const std::size_t per = ix.per_anchor();
  double c = 0.0;
  for (std::size_t t = 0; t < ix.size(); ++t) {
    const std::size_t b = t / per;
    const double et = (r.tau[t] - clock[b]) / meas.tau_sigma(t);
    const double ef = (r.f[t] - freq[b]) / meas.doppler_sigma(t);
    c += 0.5 * (et * et + ef * ef);
  }
  return c;
}

// Closed-form offsets minimizing the cost for fixed motion state.
void optimal_offsets(const RawResiduals& r, const MeasurementSet& meas, std::vector<double>& clock,
                     std::vector<double>& freq) {
  const TripleIndexer& ix = r.geometry.index;
  const std::size_t per = ix.per_anchor();
  clock.assign(static_cast<std::size_t>(ix.num_anchors), 0.0);
  freq.assign(static_cast<std::size_t>(ix.num_anchors), 0.0);
  for (int b = 0; b < ix.num_anchors; ++b) {
    double wt = 0.0, wf = 0.0, st = 0.0, sf = 0.0;
    for (std::size_t i = 0; i < per; ++i) {
      const std::size_t t = static_cast<std::size_t>(b) * per + i;
      const double a = 1.0 / (meas.tau_sigma(t) * meas.tau_sigma(t));
      const double c = 1.0 / (meas.doppler_sigma(t) * meas.doppler_sigma(t));
      wt += a;
      st += a * r.tau[t];
      wf += c;
      sf += c * r.f[t];
    }
    clock[static_cast<std::size_t>(b)] = st / wt;
    freq[static_cast<std::size_t>(b)] = sf / wf;
  }
}

// Cost at a motion state; offsets are either taken from `clock`/`freq` or, when
// `profile` is set, replaced by their optimum (written back).
double evaluate(const MotionState& m, const MeasurementSet& meas, const Scenario& scenario, bool profile,
                std::vector<double>& clock, std::vector<double>& freq) {
  const RawResiduals r = raw_residuals(m, meas, scenario);
  if (!r.valid) return std::numeric_limits<double>::infinity();
  if (profile) optimal_offsets(r, meas, clock, freq);
  return weighted_cost(r, meas, clock, freq);
}

// Per-triple derivative of the delay and Doppler predictions with respect to a
// motion block.
struct BlockJacobian {
  std::vector<Vec3> tau;
  std::vector<Vec3> f;
};

BlockJacobian block_jacobian(const GeometryTable& g, const Scenario& scenario, Block block) {
  const TripleIndexer& ix = g.index;
  BlockJacobian j;
  j.tau.resize(ix.size());
  j.f.resize(ix.size());
  const double fc = scenario.waveform.carrier_frequency;
  const double lambda = scenario.waveform.wavelength();
  for (int b = 0; b < ix.num_anchors; ++b)
    for (int k = 0; k < ix.num_slots; ++k)
      for (int u = 0; u < ix.num_elements; ++u) {
        const std::size_t t = ix(b, u, k);
        const TripleGradient tg = triple_gradient(g, t, scenario.slots.elapsed(k), scenario.array.offset(u), fc,
                                                  lambda, scenario.pathloss_exponent);
        switch (block) {
          case Block::kPosition: j.tau[t] = tg.tau_p; j.f[t] = tg.f_p; break;
          case Block::kVelocity: j.tau[t] = tg.tau_v; j.f[t] = tg.f_v; break;
          case Block::kOrientation: j.tau[t] = tg.tau_s; j.f[t] = tg.f_s; break;
          case Block::kOffsets: break;
        }
      }
  return j;
}

struct Quadratic {
  Vec3 gradient = Vec3::Zero();
  Mat3 hessian = Mat3::Zero();  // Gauss-Newton
};

// Gradient and Gauss-Newton matrix of the cost for one motion block. With
// `centered` set the Jacobian is centered per anchor, which is the Gauss-Newton
// matrix of the cost with offsets profiled out.
Quadratic block_quadratic(const RawResiduals& r, const MeasurementSet& meas, const Scenario& scenario, Block block,
                          const std::vector<double>& clock, const std::vector<double>& freq, bool centered) {
  const BlockJacobian j = block_jacobian(r.geometry, scenario, block);
  const TripleIndexer& ix = r.geometry.index;
  const std::size_t per = ix.per_anchor();
  Quadratic q;
  for (int b = 0; b < ix.num_anchors; ++b) {
    Vec3 mt = Vec3::Zero(), mf = Vec3::Zero();
    if (centered) {
      double wt = 0.0, wf = 0.0;
      for (std::size_t i = 0; i < per; ++i) {
        const std::size_t t = static_cast<std::size_t>(b) * per + i;
        const double a = 1.0 / (meas.tau_sigma(t) * meas.tau_sigma(t));
        const double c = 1.0 / (meas.doppler_sigma(t) * meas.doppler_sigma(t));
        wt += a;
        wf += c;
        mt += a * j.tau[t];
        mf += c * j.f[t];
      }
      mt /= wt;
      mf /= wf;
    }
    for (std::size_t i = 0; i < per; ++i) {
      const std::size_t t = static_cast<std::size_t>(b) * per + i;
      const double a = 1.0 / (meas.tau_sigma(t) * meas.tau_sigma(t));
      const double c = 1.0 / (meas.doppler_sigma(t) * meas.doppler_sigma(t));
      const double et = r.tau[t] - clock[static_cast<std::size_t>(b)];
      const double ef = r.f[t] - freq[static_cast<std::size_t>(b)];
      q.gradient -= a * et * j.tau[t] + c * ef * j.f[t];
      const Vec3 gt = j.tau[t] - mt;
      const Vec3 gf = j.f[t] - mf;
      q.hessian += a * gt * gt.transpose() + c * gf * gf.transpose();
    }
  }
  return q;
}

double block_step(const SolverConfig& cfg, Block block) {
  switch (block) {
    case Block::kPosition: return cfg.position_step;
    case Block::kVelocity: return cfg.velocity_step;
    case Block::kOrientation: return cfg.orientation_step;
    case Block::kOffsets: break;
  }
  return 1.0;
}

MotionState moved(const MotionState& m, Block block, const Vec3& d) {
  MotionState out = m;
  if (block == Block::kPosition) out.position0 += d;
  if (block == Block::kVelocity) out.velocity += d;
  if (block == Block::kOrientation) out.orientation = retract(m.orientation, d);
  return out;
}

// One Armijo line search on a motion block. Returns true when a step was accepted.
bool update_motion_block(EstimateState& st, const MeasurementSet& meas, const Scenario& scenario,
                         const SolverConfig& cfg, Block block) {
  const MotionState m = st.motion();
  const RawResiduals r = raw_residuals(m, meas, scenario);
  if (!r.valid) return false;
  std::vector<double> clock = st.clock_offset, freq = st.frequency_offset;
  if (cfg.profile_offsets) optimal_offsets(r, meas, clock, freq);
  const double phi0 = weighted_cost(r, meas, clock, freq);
  const Quadratic q = block_quadratic(r, meas, scenario, block, clock, freq, cfg.profile_offsets);

  Vec3 d;
  if (block == Block::kOrientation) {
    const Eigen::Matrix<double, 3, 2> basis = tangent_basis(m.orientation);
    const Eigen::Vector2d gt = basis.transpose() * q.gradient;
    if (cfg.direction == BlockDirection::kGaussNewton) {
      const Eigen::MatrixXd ht = basis.transpose() * q.hessian * basis;
      d = -basis * (symmetric_pinv(ht, 1e-14).matrix * gt);
    } else {
      d = -basis * gt;
      if (d.norm() > 0.0) d *= cfg.orientation_step / d.norm();
    }
  } else if (cfg.direction == BlockDirection::kGaussNewton) {
    d = -symmetric_pinv(q.hessian, 1e-14).matrix * q.gradient;
  } else {
    d = -q.gradient;
    if (d.norm() > 0.0) d *= block_step(cfg, block) / d.norm();
  }
  const double slope = q.gradient.dot(d);
  if (!(slope < 0.0) || !d.allFinite()) return false;

  for (double t = 1.0; t >= cfg.step_tolerance; t *= cfg.backtracking) {
    std::vector<double> c2 = clock, f2 = freq;
    const MotionState cand = moved(m, block, t * d);
    const double phi = evaluate(cand, meas, scenario, cfg.profile_offsets, c2, f2);
    if (phi <= phi0 + cfg.armijo * t * slope && phi <= st.cost) {
      st.position0 = cand.position0;
      st.velocity = cand.velocity;
      st.orientation = cand.orientation;
      st.clock_offset = std::move(c2);
      st.frequency_offset = std::move(f2);
      st.cost = phi;
      return true;
    }
  }
  return false;
}

bool update_offsets_block(EstimateState& st, const MeasurementSet& meas, const Scenario& scenario,
                          const SolverConfig& cfg) {
  const RawResiduals r = raw_residuals(st.motion(), meas, scenario);
  if (!r.valid) return false;
  const std::size_t nb = st.clock_offset.size();
  std::vector<double> clock, freq;
  optimal_offsets(r, meas, clock, freq);
  Eigen::VectorXd d(static_cast<Eigen::Index>(2 * nb));
  if (cfg.direction == BlockDirection::kGaussNewton || cfg.profile_offsets) {
    // The cost is quadratic in the offsets, so the Gauss-Newton step is exact.
    for (std::size_t b = 0; b < nb; ++b) {
      d(static_cast<Eigen::Index>(b)) = clock[b] - st.clock_offset[b];
      d(static_cast<Eigen::Index>(nb + b)) = freq[b] - st.frequency_offset[b];
    }
  } else {
    const Eigen::VectorXd g = block_gradient(st, meas, scenario, Block::kOffsets);
    const double gd = g.head(static_cast<Eigen::Index>(nb)).cwiseAbs().maxCoeff();
    const double ge = g.tail(static_cast<Eigen::Index>(nb)).cwiseAbs().maxCoeff();
    d.head(static_cast<Eigen::Index>(nb)) = gd > 0.0 ? Eigen::VectorXd(-g.head(static_cast<Eigen::Index>(nb)) * (cfg.clock_step / gd))
                                                     : Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nb));
    d.tail(static_cast<Eigen::Index>(nb)) = ge > 0.0 ? Eigen::VectorXd(-g.tail(static_cast<Eigen::Index>(nb)) * (cfg.frequency_step / ge))
                                                     : Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nb));
  }
  const Eigen::VectorXd g = block_gradient(st, meas, scenario, Block::kOffsets);
  const double slope = g.dot(d);
  if (!(slope < 0.0)) return false;
  for (double t = 1.0; t >= cfg.step_tolerance; t *= cfg.backtracking) {
    std::vector<double> c2 = st.clock_offset, f2 = st.frequency_offset;
    for (std::size_t b = 0; b < nb; ++b) {
      c2[b] += t * d(static_cast<Eigen::Index>(b));
      f2[b] += t * d(static_cast<Eigen::Index>(nb + b));
    }
    const double phi = weighted_cost(r, meas, c2, f2);
    if (phi <= st.cost + cfg.armijo * t * slope && phi <= st.cost) {
      st.clock_offset = std::move(c2);
      st.frequency_offset = std::move(f2);
      st.cost = phi;
      return true;
    }
  }
  return false;
}

EstimateState refine_once(const InitEstimate& init, const MeasurementSet& meas, const Scenario& scenario,
                          const SolverConfig& cfg) {
  EstimateState st = state_from_init(init);
  require(static_cast<int>(st.clock_offset.size()) == scenario.num_anchors() &&
              static_cast<int>(st.frequency_offset.size()) == scenario.num_anchors(),
          "refine: one offset pair per anchor");
  st.cost = cost(st, meas, scenario);
  if (!std::isfinite(st.cost)) {
    std::ostringstream os;
    os << "refine: non-finite cost at the initial state (position " << st.position0.transpose() << ")";
    throw EstimatorFailure(os.str());
  }
  st.reason = StopReason::kMaxIterations;
  int streak = 0;
  for (int it = 1; it <= cfg.max_outer_iters; ++it) {
    const double before = st.cost;
    bool any = false;
    for (Block block : cfg.order) {
      const bool ok = block == Block::kOffsets ? update_offsets_block(st, meas, scenario, cfg)
                                               : update_motion_block(st, meas, scenario, cfg, block);
      any = any || ok;
    }
    st.iteration = it;
    st.cost_history.push_back(st.cost);
    if (st.cost <= cfg.cost_floor) {
      st.converged = true;
      st.reason = StopReason::kCostTolerance;
      break;
    }
    const double rel = (before - st.cost) / before;
    streak = rel < cfg.cost_tolerance ? streak + 1 : 0;
    if (streak >= cfg.cost_patience) {
      st.converged = true;
      st.reason = StopReason::kCostTolerance;
      break;
    }
    if (!any) {
      st.converged = true;
      st.reason = StopReason::kStepTolerance;
      break;
    }
  }
  return st;
}

}  // namespace

double cost(const EstimateState& state, const MeasurementSet& meas, const Scenario& scenario) {
  const RawResiduals r = raw_residuals(state.motion(), meas, scenario);
  return weighted_cost(r, meas, state.clock_offset, state.frequency_offset);
}

Eigen::VectorXd block_gradient(const EstimateState& state, const MeasurementSet& meas, const Scenario& scenario,
                               Block block) {
  const RawResiduals r = raw_residuals(state.motion(), meas, scenario);
  if (!r.valid) throw DegenerateGeometry("block_gradient: degenerate geometry at the state");
  if (block != Block::kOffsets) {
    const Quadratic q = block_quadratic(r, meas, scenario, block, state.clock_offset, state.frequency_offset, false);
    return q.gradient;
  }
  const TripleIndexer& ix = r.geometry.index;
  const std::size_t per = ix.per_anchor();
  const Eigen::Index nb = ix.num_anchors;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(2 * nb);
  for (std::size_t t = 0; t < ix.size(); ++t) {
    const std::size_t b = t / per;
    const double st = meas.tau_sigma(t), sf = meas.doppler_sigma(t);
    g(static_cast<Eigen::Index>(b)) -= (r.tau[t] - state.clock_offset[b]) / (st * st);
    g(nb + static_cast<Eigen::Index>(b)) -= (r.f[t] - state.frequency_offset[b]) / (sf * sf);
  }
  return g;
}

Vec3 project_tangent(const Vec3& x, const Vec3& u) { return u - x.dot(u) * x; }

Vec3 retract(const Vec3& x, const Vec3& u) { return (x + u) / std::sqrt(1.0 + u.squaredNorm()); }

Vec3 riemannian_step(const Vec3& x, const Vec3& direction, double step) {
  require(std::abs(x.norm() - 1.0) < 1e-10, "riemannian_step: point must lie on the unit sphere");
  return retract(x, step * project_tangent(x, direction));
}

EstimateState refine(const InitEstimate& init, const MeasurementSet& meas, const Scenario& scenario,
                     const SolverConfig& cfg) {
  cfg.validate();
  if (cfg.max_outer_iters == 0) {
    EstimateState st = state_from_init(init);
    st.cost = cost(st, meas, scenario);
    st.reason = StopReason::kMaxIterations;
    return st;
  }
  EstimateState best = refine_once(init, meas, scenario, cfg);
  for (int j = 1; j <= cfg.multi_start; ++j) {
    CounterRng rng(CounterRng::derive(cfg.multi_start_seed, {0x6d73ULL, static_cast<std::uint64_t>(j)}));
    InitEstimate jittered = init;
    jittered.position0 += cfg.position_step * Vec3(rng.normal(), rng.normal(), rng.normal());
    jittered.velocity += cfg.velocity_step * Vec3(rng.normal(), rng.normal(), rng.normal());
    const Vec3 tilt(rng.normal(), rng.normal(), rng.normal());
    jittered.orientation = riemannian_step(init.orientation.normalized(), tilt, cfg.orientation_step);
    try {
      EstimateState cand = refine_once(jittered, meas, scenario, cfg);
      if (cand.cost < best.cost) best = std::move(cand);
    } catch (const EstimatorFailure&) {
      // A restart that lands on a degenerate state is simply skipped.
    }
  }
  return best;
}

}  // namespace nfloc
