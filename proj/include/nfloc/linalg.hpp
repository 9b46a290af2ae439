#pragma once

#include <Eigen/Dense>

namespace nfloc {

/// Symmetric diagonal scaling D with D_ii = 1/sqrt(A_ii), or 1 where A_ii <= 0.
Eigen::VectorXd equilibration_scale(const Eigen::MatrixXd& a);

struct PseudoInverse {
  Eigen::MatrixXd matrix;
  int rank = 0;
  double condition_number = 0.0;  // of the equilibrated matrix, over retained modes
};

/// Eigen-decomposition pseudo-inverse of a symmetric PSD matrix, computed on the
/// diagonally equilibrated matrix. Eigenvalues below `rel_threshold` times the
/// largest are discarded.
PseudoInverse symmetric_pinv(const Eigen::MatrixXd& a, double rel_threshold = 1e-12);

struct RankReport {
  int rank = 0;
  double condition_number = 0.0;
  Eigen::VectorXd singular_values;  // of the equilibrated matrix, descending
};

/// Numerical rank of a symmetric PSD matrix after equilibration: singular values
/// below `rel_threshold * sigma_max` count as zero.
RankReport equilibrated_rank(const Eigen::MatrixXd& a, double rel_threshold = 1e-10);

/// Inverse of a symmetric positive-definite matrix through equilibration.
Eigen::MatrixXd equilibrated_inverse(const Eigen::MatrixXd& a);

}  // namespace nfloc
