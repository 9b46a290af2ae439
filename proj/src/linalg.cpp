#include "nfloc/linalg.hpp"

#include <cmath>
#include <limits>

namespace nfloc {

Eigen::VectorXd equilibration_scale(const Eigen::MatrixXd& a) {
  Eigen::VectorXd d(a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) d(i) = a(i, i) > 0.0 ? 1.0 / std::sqrt(a(i, i)) : 1.0;
  return d;
}

PseudoInverse symmetric_pinv(const Eigen::MatrixXd& a, double rel_threshold) {
  PseudoInverse out;
  const Eigen::Index n = a.rows();
  out.matrix = Eigen::MatrixXd::Zero(n, n);
  if (n == 0) return out;
  const Eigen::VectorXd d = equilibration_scale(a);
  Eigen::MatrixXd scaled = d.asDiagonal() * a * d.asDiagonal();
  scaled = 0.5 * (scaled + scaled.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(scaled);
  const Eigen::VectorXd& lam = es.eigenvalues();
  const double lmax = lam.cwiseAbs().maxCoeff();
  if (!(lmax > 0.0)) return out;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(n);
  double lmin = lmax;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (lam(i) > rel_threshold * lmax) {
      inv(i) = 1.0 / lam(i);
      ++out.rank;
      lmin = std::min(lmin, lam(i));
    }
  }
  out.condition_number = lmax / lmin;
  const Eigen::MatrixXd& v = es.eigenvectors();
  out.matrix = d.asDiagonal() * (v * inv.asDiagonal() * v.transpose()) * d.asDiagonal();
  return out;
}

RankReport equilibrated_rank(const Eigen::MatrixXd& a, double rel_threshold) {
  RankReport r;
  const Eigen::VectorXd d = equilibration_scale(a);
  const Eigen::MatrixXd scaled = d.asDiagonal() * a * d.asDiagonal();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(scaled);
  r.singular_values = svd.singularValues();
  if (r.singular_values.size() == 0) return r;
  const double smax = r.singular_values(0);
  if (!(smax > 0.0)) {
    r.condition_number = std::numeric_limits<double>::infinity();
    return r;
  }
  for (Eigen::Index i = 0; i < r.singular_values.size(); ++i)
    if (r.singular_values(i) > rel_threshold * smax) ++r.rank;
  const double smin = r.singular_values(r.singular_values.size() - 1);
  r.condition_number = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
  return r;
}

Eigen::MatrixXd equilibrated_inverse(const Eigen::MatrixXd& a) {
  const Eigen::VectorXd d = equilibration_scale(a);
  Eigen::MatrixXd scaled = d.asDiagonal() * a * d.asDiagonal();
  scaled = 0.5 * (scaled + scaled.transpose());
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(scaled, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::VectorXd s = svd.singularValues();
  for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = 1.0 / s(i);
  const Eigen::MatrixXd inv = svd.matrixV() * s.asDiagonal() * svd.matrixU().transpose();
  return d.asDiagonal() * inv * d.asDiagonal();
}

}  // namespace nfloc
