#include "nfloc/fisher.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "nfloc/linalg.hpp"

namespace nfloc {

namespace {

std::string triple_name(const char* symbol, int b, int u, int k) {
  std::ostringstream os;
  os << symbol << '[' << b + 1 << ',' << u + 1 << ',' << k + 1 << ']';
  return os.str();
}

std::string anchor_name(const char* symbol, int b) {
  std::ostringstream os;
  os << symbol << '[' << b + 1 << ']';
  return os.str();
}

}  // namespace

NuisanceSet effective_nuisance(const FimOptions& options) {
  NuisanceSet n = options.nuisance;
  if (options.mode == MeasurementMode::kDopplerOnly) n.clock_offsets = false;
  if (options.mode == MeasurementMode::kDelayOnly) n.frequency_offsets = false;
  return n;
}

Mat3 TripleFim::matrix() const {
  Mat3 m;
  m << tau_tau, tau_f, beta_tau,
       tau_f, f_f, beta_f,
       beta_tau, beta_f, beta_beta;
  return m;
}

TripleFim fim_entries(const ChannelParams& channel, const WaveformStats& stats, int b, int u, int k,
                      const FimOptions& options) {
  if (!(stats.energy > 0.0) || !(stats.effective_bandwidth > 0.0))
    throw ConfigurationError("fim_entries: waveform statistics have not been computed");
  const std::size_t t = channel.index(b, u, k);
  require(t < channel.gain.size(), "fim_entries: triple index out of range");
  const double beta = channel.gain[t];
  const double fd = channel.doppler_freq[t];
  const double n0 = channel.noise_psd;
  const double e_s = stats.energy;
  const double pre = 8.0 * kPi * kPi * beta * beta / n0;

  TripleFim f;
  f.tau_tau = pre * e_s *
              (fd * fd + stats.effective_bandwidth * stats.effective_bandwidth +
               fd * stats.baseband_carrier_correlation);
  f.f_f = pre * stats.effective_duration * stats.effective_duration;
  if (options.doppler_fim_includes_energy) f.f_f *= e_s;
  const double snr_t = beta * beta * e_s / n0;
  f.beta_beta = snr_t / (4.0 * kPi * kPi * beta * beta);
  f.beta_tau = -(2.0 / n0) * std::abs(beta) * stats.derivative_correlation;
  f.tau_f = pre * channel.carrier_frequency * fd * stats.temporal_centroid;
  f.beta_f = 0.0;

  if (options.mode == MeasurementMode::kDopplerOnly) {
    f.tau_tau = 0.0;
    f.beta_tau = 0.0;
    f.tau_f = 0.0;
  } else if (options.mode == MeasurementMode::kDelayOnly) {
    f.f_f = 0.0;
    f.tau_f = 0.0;
  }
  return f;
}

DelayFimTerms delay_fim_terms(const ChannelParams& channel, const WaveformStats& stats, int b, int u, int k) {
  const std::size_t t = channel.index(b, u, k);
  const double beta = channel.gain[t];
  const double fd = channel.doppler_freq[t];
  DelayFimTerms d;
  d.prefactor = 8.0 * kPi * kPi * beta * beta * stats.energy / channel.noise_psd;
  d.carrier_term = fd * fd;
  d.bandwidth_term = stats.effective_bandwidth * stats.effective_bandwidth;
  d.cross_term = fd * stats.baseband_carrier_correlation;
  return d;
}

Eigen::MatrixXd ChannelFim::anchor_block(int b) const {
  require(b >= 0 && b < index.num_anchors, "ChannelFim::anchor_block: anchor out of range");
  const Eigen::Index n = static_cast<Eigen::Index>(index.per_anchor());
  const Eigen::Index id = 3 * n, ie = 3 * n + 1;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(anchor_dim(), anchor_dim());
  for (Eigen::Index i = 0; i < n; ++i) {
    const TripleFim& e = entries[static_cast<std::size_t>(b) * index.per_anchor() + static_cast<std::size_t>(i)];
    const Eigen::Index it = i, iff = n + i, ib = 2 * n + i;
    m(it, it) = e.tau_tau;
    m(iff, iff) = e.f_f;
    m(ib, ib) = e.beta_beta;
    m(it, iff) = m(iff, it) = e.tau_f;
    m(it, ib) = m(ib, it) = e.beta_tau;
    m(iff, ib) = m(ib, iff) = e.beta_f;
    // Offsets enter through tau + delta and f_d + epsilon.
    m(it, id) = m(id, it) = e.tau_tau;
    m(iff, id) = m(id, iff) = e.tau_f;
    m(ib, id) = m(id, ib) = e.beta_tau;
    m(it, ie) = m(ie, it) = e.tau_f;
    m(iff, ie) = m(ie, iff) = e.f_f;
    m(ib, ie) = m(ie, ib) = e.beta_f;
    m(id, id) += e.tau_tau;
    m(ie, ie) += e.f_f;
    m(id, ie) += e.tau_f;
  }
  m(ie, id) = m(id, ie);
  return m;
}

Eigen::MatrixXd ChannelFim::dense() const {
  const Eigen::Index a = anchor_dim();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(a * index.num_anchors, a * index.num_anchors);
  for (int b = 0; b < index.num_anchors; ++b) m.block(b * a, b * a, a, a) = anchor_block(b);
  return m;
}

ChannelFim assemble_channel_fim(const ChannelParams& channel, const WaveformStats& stats,
                                const FimOptions& options) {
  ChannelFim fim;
  fim.index = channel.index;
  fim.entries.resize(channel.index.size());
  for (int b = 0; b < fim.index.num_anchors; ++b)
    for (int k = 0; k < fim.index.num_slots; ++k)
      for (int u = 0; u < fim.index.num_elements; ++u)
        fim.entries[fim.index(b, u, k)] = fim_entries(channel, stats, b, u, k, options);
  return fim;
}

TransformJacobian jacobian(const Scenario& scenario, const GeometryTable& geometry, const ChannelParams& channel,
                           OffsetConvention convention) {
  TransformJacobian jac;
  jac.index = geometry.index;
  const TripleIndexer& ix = jac.index;
  const Eigen::Index n = static_cast<Eigen::Index>(ix.per_anchor());
  const Eigen::Index rows = static_cast<Eigen::Index>(9 + 2 * ix.num_anchors + ix.size());
  const Eigen::Index cols = static_cast<Eigen::Index>(ix.num_anchors) * (3 * n + 2);
  jac.matrix = Eigen::MatrixXd::Zero(rows, cols);
  jac.row_names.resize(static_cast<std::size_t>(rows));
  jac.col_names.resize(static_cast<std::size_t>(cols));

  const char* axes[3] = {"x", "y", "z"};
  const char* blocks[3] = {"p", "v", "s"};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) jac.row_names[static_cast<std::size_t>(3 * i + j)] = std::string(blocks[i]) + "_" + axes[j];
  for (int b = 0; b < ix.num_anchors; ++b) {
    jac.row_names[static_cast<std::size_t>(jac.kappa_delta(b))] = anchor_name("delta", b);
    jac.row_names[static_cast<std::size_t>(jac.kappa_eps(b))] = anchor_name("eps", b);
  }

  for (int b = 0; b < ix.num_anchors; ++b) {
    const Eigen::Index off = jac.eta_anchor_offset(b);
    for (int k = 0; k < ix.num_slots; ++k) {
      const double elapsed = scenario.slots.elapsed(k);
      for (int u = 0; u < ix.num_elements; ++u) {
        const std::size_t t = ix(b, u, k);
        const Eigen::Index i = static_cast<Eigen::Index>(ix.local(u, k));
        const double o = gradient_offset(scenario.array, channel.wavelength, u, convention);
        const TripleGradient g = triple_gradient(geometry, t, elapsed, o, channel.carrier_frequency,
                                                 channel.wavelength, channel.pathloss_exponent);
        const Eigen::Index ct = off + i, cf = off + n + i, cb = off + 2 * n + i;
        jac.matrix.block<3, 1>(0, ct) = g.tau_p;
        jac.matrix.block<3, 1>(3, ct) = g.tau_v;
        jac.matrix.block<3, 1>(6, ct) = g.tau_s;
        jac.matrix(jac.kappa_delta(b), ct) = 1.0;
        jac.matrix.block<3, 1>(0, cf) = g.f_p;
        jac.matrix.block<3, 1>(3, cf) = g.f_v;
        jac.matrix.block<3, 1>(6, cf) = g.f_s;
        jac.matrix(jac.kappa_eps(b), cf) = 1.0;
        jac.matrix.block<3, 1>(0, cb) = g.beta_p;
        jac.matrix.block<3, 1>(3, cb) = g.beta_v;
        jac.matrix.block<3, 1>(6, cb) = g.beta_s;
        jac.matrix(jac.kappa_beta(t), cb) = 1.0;
        jac.row_names[static_cast<std::size_t>(jac.kappa_beta(t))] = triple_name("beta", b, u, k);
        jac.col_names[static_cast<std::size_t>(ct)] = triple_name("tau", b, u, k);
        jac.col_names[static_cast<std::size_t>(cf)] = triple_name("fd", b, u, k);
        jac.col_names[static_cast<std::size_t>(cb)] = triple_name("beta", b, u, k);
      }
    }
    jac.matrix(jac.kappa_delta(b), off + 3 * n) = 1.0;
    jac.matrix(jac.kappa_eps(b), off + 3 * n + 1) = 1.0;
    jac.col_names[static_cast<std::size_t>(off + 3 * n)] = anchor_name("delta", b);
    jac.col_names[static_cast<std::size_t>(off + 3 * n + 1)] = anchor_name("eps", b);
  }
  return jac;
}

JacobianAudit audit_jacobian(const TransformJacobian& jac) {
  JacobianAudit audit;
  auto fail = [&audit](const std::string& msg) {
    audit.ok = false;
    audit.problems.push_back(msg);
  };
  const TripleIndexer& ix = jac.index;
  const Eigen::Index n = static_cast<Eigen::Index>(ix.per_anchor());
  if (jac.matrix.rows() != static_cast<Eigen::Index>(jac.row_names.size()) ||
      jac.matrix.cols() != static_cast<Eigen::Index>(jac.col_names.size())) {
    fail("name lists do not match the matrix shape");
    return audit;
  }
  std::set<std::string> seen;
  for (const auto& s : jac.row_names)
    if (s.empty() || !seen.insert("k:" + s).second) fail("kappa name missing or duplicated: '" + s + "'");
  for (const auto& s : jac.col_names)
    if (s.empty() || !seen.insert("e:" + s).second) fail("eta name missing or duplicated: '" + s + "'");

  for (int b = 0; b < ix.num_anchors; ++b) {
    const Eigen::Index off = jac.eta_anchor_offset(b);
    for (Eigen::Index c = 0; c < 3 * n + 2; ++c) {
      const Eigen::Index col = off + c;
      std::set<Eigen::Index> allowed;
      Eigen::Index own;
      std::string prefix;
      if (c < 3 * n) {
        for (Eigen::Index r = 0; r < 9; ++r) allowed.insert(r);
        const std::size_t t = static_cast<std::size_t>(b) * ix.per_anchor() + static_cast<std::size_t>(c % n);
        if (c < n) {
          own = jac.kappa_delta(b);
          prefix = "tau[";
        } else if (c < 2 * n) {
          own = jac.kappa_eps(b);
          prefix = "fd[";
        } else {
          own = jac.kappa_beta(t);
          prefix = "beta[";
        }
      } else if (c == 3 * n) {
        own = jac.kappa_delta(b);
        prefix = "delta[";
      } else {
        own = jac.kappa_eps(b);
        prefix = "eps[";
      }
      allowed.insert(own);
      const std::string& name = jac.col_names[static_cast<std::size_t>(col)];
      if (name.rfind(prefix, 0) != 0) fail("eta column " + std::to_string(col) + " named '" + name + "', expected " + prefix);
      if (jac.matrix(own, col) != 1.0) fail("eta column '" + name + "' lacks its unit self-derivative");
      for (Eigen::Index r = 0; r < jac.matrix.rows(); ++r)
        if (jac.matrix(r, col) != 0.0 && !allowed.count(r))
          fail("eta column '" + name + "' depends on unrelated kappa '" + jac.row_names[static_cast<std::size_t>(r)] + "'");
    }
  }
  return audit;
}

std::vector<Eigen::Index> nuisance_indices(const TransformJacobian& jac, const NuisanceSet& nuisance) {
  std::vector<Eigen::Index> idx;
  for (int b = 0; b < jac.index.num_anchors; ++b) {
    if (nuisance.clock_offsets) idx.push_back(jac.kappa_delta(b));
  }
  for (int b = 0; b < jac.index.num_anchors; ++b) {
    if (nuisance.frequency_offsets) idx.push_back(jac.kappa_eps(b));
  }
  if (nuisance.gains)
    for (std::size_t t = 0; t < jac.index.size(); ++t) idx.push_back(jac.kappa_beta(t));
  return idx;
}

namespace {

// kappa rows touched by anchor b: (p, v, s), its two offsets and its gains.
std::vector<Eigen::Index> anchor_rows(const TransformJacobian& jac, int b) {
  std::vector<Eigen::Index> rows;
  for (Eigen::Index r = 0; r < 9; ++r) rows.push_back(r);
  rows.push_back(jac.kappa_delta(b));
  rows.push_back(jac.kappa_eps(b));
  const std::size_t n = jac.index.per_anchor();
  for (std::size_t i = 0; i < n; ++i) rows.push_back(jac.kappa_beta(static_cast<std::size_t>(b) * n + i));
  return rows;
}

}  // namespace

DenseEfim efim(const ChannelFim& channel_fim, const TransformJacobian& jac,
               const std::vector<Eigen::Index>& nuisance) {
  require(channel_fim.index.size() == jac.index.size(), "efim: FIM and Jacobian describe different scenarios");
  const std::set<Eigen::Index> nset(nuisance.begin(), nuisance.end());
  DenseEfim out;
  const Eigen::Index a = channel_fim.anchor_dim();
  for (int b = 0; b < channel_fim.index.num_anchors; ++b) {
    const std::vector<Eigen::Index> rows = anchor_rows(jac, b);
    const Eigen::MatrixXd jb = jac.matrix(rows, Eigen::seqN(jac.eta_anchor_offset(b), a));
    const Eigen::MatrixXd kb = jb * channel_fim.anchor_block(b) * jb.transpose();
    out.efim += kb.topLeftCorner<9, 9>();
    std::vector<Eigen::Index> local;
    for (Eigen::Index i = 9; i < static_cast<Eigen::Index>(rows.size()); ++i)
      if (nset.count(rows[static_cast<std::size_t>(i)])) local.push_back(i);
    if (local.empty()) continue;
    const Eigen::MatrixXd knn = kb(local, local);
    const Eigen::MatrixXd k1n = kb(Eigen::seqN(0, 9), local);
    const PseudoInverse pinv = symmetric_pinv(knn, 1e-12);
    out.efim -= k1n * pinv.matrix * k1n.transpose();
    out.nuisance_dim += static_cast<int>(local.size());
    out.nuisance_rank += pinv.rank;
  }
  out.efim = 0.5 * (out.efim + out.efim.transpose()).eval();
  return out;
}

Matrix9 kappa1_block_of_full_inverse(const ChannelFim& channel_fim, const TransformJacobian& jac,
                                     const std::vector<Eigen::Index>& nuisance) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index r = 0; r < 9; ++r) keep.push_back(r);
  keep.insert(keep.end(), nuisance.begin(), nuisance.end());
  const Eigen::MatrixXd jk = jac.matrix(keep, Eigen::all);
  const Eigen::MatrixXd full = jk * channel_fim.dense() * jk.transpose();
  return equilibrated_inverse(full).topLeftCorner<9, 9>();
}

Matrix9 efim_structured(const Scenario& scenario, const GeometryTable& geometry, const ChannelParams& channel,
                        const WaveformStats& stats, const FimOptions& options) {
  const NuisanceSet nu = effective_nuisance(options);
  const TripleIndexer& ix = geometry.index;
  const int r = nu.gains ? 2 : 3;  // measurement rows kept per triple
  std::vector<int> offset_rows;    // rows shifted by an unknown offset
  if (nu.clock_offsets) offset_rows.push_back(0);
  if (nu.frequency_offsets) offset_rows.push_back(1);
  const int m = static_cast<int>(offset_rows.size());
  Eigen::MatrixXd e = Eigen::MatrixXd::Zero(r, m);
  for (int j = 0; j < m; ++j) e(offset_rows[static_cast<std::size_t>(j)], j) = 1.0;

  Matrix9 total = Matrix9::Zero();
  std::vector<Eigen::MatrixXd> grads(ix.per_anchor());
  std::vector<Eigen::MatrixXd> infos(ix.per_anchor());
  for (int b = 0; b < ix.num_anchors; ++b) {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(m, m);
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(m, 9);
    for (int k = 0; k < ix.num_slots; ++k) {
      const double elapsed = scenario.slots.elapsed(k);
      for (int u = 0; u < ix.num_elements; ++u) {
        const std::size_t t = ix(b, u, k);
        const std::size_t i = ix.local(u, k);
        const Mat3 f3 = fim_entries(channel, stats, b, u, k, options).matrix();
        Eigen::MatrixXd f;
        if (nu.gains) {
          f = f3.topLeftCorner<2, 2>();
          if (f3(2, 2) > 0.0) f -= f3.block<2, 1>(0, 2) * f3.block<1, 2>(2, 0) / f3(2, 2);
        } else {
          f = f3;
        }
        const double o = gradient_offset(scenario.array, channel.wavelength, u, options.offset_convention);
        const TripleGradient g = triple_gradient(geometry, t, elapsed, o, channel.carrier_frequency,
                                                 channel.wavelength, channel.pathloss_exponent);
        Eigen::MatrixXd a(r, 9);
        a.row(0) << g.tau_p.transpose(), g.tau_v.transpose(), g.tau_s.transpose();
        a.row(1) << g.f_p.transpose(), g.f_v.transpose(), g.f_s.transpose();
        if (r == 3) a.row(2) << g.beta_p.transpose(), g.beta_v.transpose(), g.beta_s.transpose();
        if (m > 0) {
          w += e.transpose() * f * e;
          s += e.transpose() * f * a;
        }
        grads[i] = std::move(a);
        infos[i] = std::move(f);
      }
    }
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(m, 9);
    if (m > 0) c = symmetric_pinv(w, 1e-12).matrix * s;
    for (std::size_t i = 0; i < ix.per_anchor(); ++i) {
      const Eigen::MatrixXd centered = grads[i] - e * c;
      total += centered.transpose() * infos[i] * centered;
    }
  }
  return 0.5 * (total + total.transpose());
}

Eigen::Matrix<double, 3, 2> tangent_basis(const Vec3& s) {
  // Reflector about the largest component keeps v well away from zero.
  Eigen::Index i = 0;
  s.cwiseAbs().maxCoeff(&i);
  Vec3 v = s;
  v(i) += s(i) >= 0.0 ? 1.0 : -1.0;
  const Mat3 h = Mat3::Identity() - 2.0 * v * v.transpose() / v.squaredNorm();
  Eigen::Matrix<double, 3, 2> basis;
  int col = 0;
  for (int j = 0; j < 3; ++j)
    if (j != i) basis.col(col++) = h.col(j);
  return basis;
}

Eigen::Matrix<double, 9, 8> constraint_null_basis(const Vec3& s) {
  Eigen::Matrix<double, 9, 8> u = Eigen::Matrix<double, 9, 8>::Zero();
  u.topLeftCorner<6, 6>().setIdentity();
  u.block<3, 2>(6, 6) = tangent_basis(s);
  return u;
}

BoundReport ccrb(const Matrix9& efim, const Vec3& orientation, double rank_threshold) {
  require(std::abs(orientation.norm() - 1.0) < 1e-9, "ccrb: orientation must be a unit vector");
  BoundReport rep;
  rep.efim_kappa1 = efim;
  const Eigen::Matrix<double, 9, 8> u = constraint_null_basis(orientation);
  const Eigen::MatrixXd tangent = u.transpose() * efim * u;
  const RankReport rr = equilibrated_rank(tangent, rank_threshold);
  rep.rank_kappa1 = rr.rank;
  rep.condition_number = rr.condition_number;
  rep.singular_values = rr.singular_values;
  rep.localizable = rr.rank == 8;
  if (!rep.localizable) {
    const double inf = std::numeric_limits<double>::infinity();
    rep.ccrb.setConstant(inf);
    rep.peb = rep.veb = rep.oeb = rep.peb_sq = rep.veb_sq = rep.oeb_sq = inf;
    return rep;
  }
  rep.ccrb = u * equilibrated_inverse(tangent) * u.transpose();
  rep.ccrb = 0.5 * (rep.ccrb + rep.ccrb.transpose()).eval();
  rep.peb_sq = rep.ccrb.block<3, 3>(0, 0).trace();
  rep.veb_sq = rep.ccrb.block<3, 3>(3, 3).trace();
  rep.oeb_sq = rep.ccrb.block<3, 3>(6, 6).trace();
  rep.peb = std::sqrt(rep.peb_sq);
  rep.veb = std::sqrt(rep.veb_sq);
  rep.oeb = std::sqrt(rep.oeb_sq);
  return rep;
}

Matrix9 unconstrained_crb(const Matrix9& efim) {
  const RankReport rr = equilibrated_rank(efim, kRankThreshold);
  if (rr.rank < 9) return Matrix9::Constant(std::numeric_limits<double>::infinity());
  return equilibrated_inverse(efim);
}

BoundReport evaluate_bounds(const Scenario& scenario, const WaveformStats& stats, const FimOptions& options) {
  const GeometryTable geometry = build_geometry(scenario.anchors, scenario.receiver, scenario.array, scenario.slots);
  const ChannelParams channel = compute_channel(scenario);
  const Matrix9 j = efim_structured(scenario, geometry, channel, stats, options);
  return ccrb(j, scenario.receiver.orientation);
}

LocalizabilityReport localizability(const Scenario& scenario, const WaveformStats& stats,
                                    const FimOptions& options) {
  const BoundReport rep = evaluate_bounds(scenario, stats, options);
  LocalizabilityReport l;
  l.rank = rep.rank_kappa1;
  l.full_rank = rep.localizable;
  l.condition_number = rep.condition_number;
  l.singular_values = rep.singular_values;
  return l;
}

}  // namespace nfloc
