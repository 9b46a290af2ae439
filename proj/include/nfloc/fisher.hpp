#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nfloc/channel.hpp"
#include "nfloc/scenario.hpp"
#include "nfloc/waveform.hpp"

namespace nfloc {

enum class MeasurementMode {
  kJoint,        // delay and Doppler
  kDopplerOnly,  // delay rows removed, clock offsets dropped
  kDelayOnly,    // Doppler rows removed, frequency offsets dropped
};

/// Which nuisance parameters are unknown. Known ones are removed from the
/// parameter vector instead of being marginalized.
struct NuisanceSet {
  bool gains = true;
  bool clock_offsets = true;
  bool frequency_offsets = true;
};

struct FimOptions {
  /// Multiply the Doppler entry by E_S. Off reproduces the entry as printed in
  /// the reference model; see README.
  bool doppler_fim_includes_energy = false;
  OffsetConvention offset_convention = OffsetConvention::kModel;
  MeasurementMode mode = MeasurementMode::kJoint;
  NuisanceSet nuisance;
};

/// Offsets that carry no information in `options.mode` are treated as absent.
NuisanceSet effective_nuisance(const FimOptions& options);

/// Per-triple Fisher entries over (delay, Doppler frequency, gain).
struct TripleFim {
  double tau_tau = 0.0;
  double f_f = 0.0;
  double beta_beta = 0.0;
  double beta_tau = 0.0;
  double tau_f = 0.0;
  double beta_f = 0.0;

  /// 3x3 matrix in (tau, f, beta) order.
  Mat3 matrix() const;
};

/// The three terms of the delay entry, before the common prefactor.
struct DelayFimTerms {
  double prefactor = 0.0;     // 8 pi^2 |beta|^2 E_S / N_o
  double carrier_term = 0.0;  // f_d^2
  double bandwidth_term = 0.0;  // alpha_1^2
  double cross_term = 0.0;      // f_d alpha_2
};

TripleFim fim_entries(const ChannelParams& channel, const WaveformStats& stats, int b, int u, int k,
                      const FimOptions& options = {});
DelayFimTerms delay_fim_terms(const ChannelParams& channel, const WaveformStats& stats, int b, int u, int k);

/// Channel-parameter FIM. Each anchor owns a block over
/// [tau (N), f_d (N), beta (N), delta, epsilon] with N = N_U * N_K entries in
/// TripleIndexer::local order; blocks of different anchors do not couple.
struct ChannelFim {
  TripleIndexer index;
  std::vector<TripleFim> entries;  // flat triple index

  Eigen::Index anchor_dim() const { return static_cast<Eigen::Index>(3 * index.per_anchor() + 2); }
  Eigen::MatrixXd anchor_block(int b) const;
  Eigen::MatrixXd dense() const;
};

ChannelFim assemble_channel_fim(const ChannelParams& channel, const WaveformStats& stats,
                                const FimOptions& options = {});

/// Jacobian from channel parameters eta to kappa =
/// [p (3); v (3); s (3); delta_1..N_B; eps_1..N_B; beta per triple].
/// Entry (i, j) is d eta_j / d kappa_i.
struct TransformJacobian {
  TripleIndexer index;
  Eigen::MatrixXd matrix;
  std::vector<std::string> row_names;  // kappa
  std::vector<std::string> col_names;  // eta

  Eigen::Index kappa_delta(int b) const { return 9 + b; }
  Eigen::Index kappa_eps(int b) const { return 9 + index.num_anchors + b; }
  Eigen::Index kappa_beta(std::size_t t) const {
    return static_cast<Eigen::Index>(9 + 2 * index.num_anchors + t);
  }
  Eigen::Index eta_anchor_offset(int b) const {
    return static_cast<Eigen::Index>(b * (3 * index.per_anchor() + 2));
  }
};

TransformJacobian jacobian(const Scenario& scenario, const GeometryTable& geometry, const ChannelParams& channel,
                           OffsetConvention convention = OffsetConvention::kModel);

struct JacobianAudit {
  bool ok = true;
  std::vector<std::string> problems;
};

/// Checks naming and sparsity: every eta column is named once and depends only
/// on the kappa rows its symbol is a function of.
JacobianAudit audit_jacobian(const TransformJacobian& jac);

/// kappa indices marginalized as nuisance under `nuisance`.
std::vector<Eigen::Index> nuisance_indices(const TransformJacobian& jac, const NuisanceSet& nuisance);

struct DenseEfim {
  Matrix9 efim = Matrix9::Zero();
  int nuisance_dim = 0;
  int nuisance_rank = 0;
};

/// Transforms the channel FIM to kappa, drops known nuisances and marginalizes
/// the listed ones by Schur complement. The nuisance block is pseudo-inverted
/// anchor by anchor.
DenseEfim efim(const ChannelFim& channel_fim, const TransformJacobian& jac,
               const std::vector<Eigen::Index>& nuisance);

/// The (p, v, s) block of the inverse of the full transformed FIM restricted to
/// (p, v, s) plus `nuisance`. Oracle for the Schur-complement identity.
Matrix9 kappa1_block_of_full_inverse(const ChannelFim& channel_fim, const TransformJacobian& jac,
                                     const std::vector<Eigen::Index>& nuisance);

/// EFIM over (p, v, s) assembled triple by triple. Gains are marginalized per
/// triple and offsets per anchor through a weighted-centering form of the Schur
/// complement, which avoids the cancellation of the dense route.
Matrix9 efim_structured(const Scenario& scenario, const GeometryTable& geometry, const ChannelParams& channel,
                        const WaveformStats& stats, const FimOptions& options = {});

/// Orthonormal 3x2 basis of the plane orthogonal to the unit vector `s`, from
/// the Householder reflector that maps e_i to s.
Eigen::Matrix<double, 3, 2> tangent_basis(const Vec3& s);

/// 9x8 basis of the null space of the constraint gradient [0_6, 2 s^T].
Eigen::Matrix<double, 9, 8> constraint_null_basis(const Vec3& s);

struct BoundReport {
  Matrix9 efim_kappa1 = Matrix9::Zero();
  Matrix9 ccrb = Matrix9::Zero();
  double peb = 0.0, veb = 0.0, oeb = 0.0;
  double peb_sq = 0.0, veb_sq = 0.0, oeb_sq = 0.0;
  int rank_kappa1 = 0;
  double condition_number = 0.0;
  bool localizable = false;
  Eigen::VectorXd singular_values;  // of the equilibrated tangent EFIM
};

inline constexpr double kRankThreshold = 1e-10;

BoundReport ccrb(const Matrix9& efim, const Vec3& orientation, double rank_threshold = kRankThreshold);

/// Inverse of the 9x9 EFIM without the unit-norm constraint (equilibrated);
/// infinite entries when singular.
Matrix9 unconstrained_crb(const Matrix9& efim);

struct LocalizabilityReport {
  int rank = 0;
  bool full_rank = false;
  double condition_number = 0.0;
  Eigen::VectorXd singular_values;
};

LocalizabilityReport localizability(const Scenario& scenario, const WaveformStats& stats,
                                    const FimOptions& options = {});

/// Structured EFIM followed by the constrained bound.
BoundReport evaluate_bounds(const Scenario& scenario, const WaveformStats& stats, const FimOptions& options = {});

}  // namespace nfloc
