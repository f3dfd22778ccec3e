#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace eivlr {

/// Lower-triangular P with positive diagonal and P P^T = omega.
/// Throws NotPositiveDefinite naming the failing pivot.
Eigen::MatrixXd chol(const Eigen::MatrixXd& omega);

/// Derivative of the Cholesky factor along one direction: the lower
/// triangular dP with dP P^T + P dP^T = domega, obtained by differentiating
/// the column-wise Cholesky recurrence (forward mode).
Eigen::MatrixXd chol_derivative(const Eigen::MatrixXd& factor, const Eigen::MatrixXd& domega);

/// chol_derivative for each domega[j].
std::vector<Eigen::MatrixXd> chol_dtheta(const Eigen::MatrixXd& factor,
                                         std::span<const Eigen::MatrixXd> domega);

struct CholPair {
  Eigen::MatrixXd factor;
  std::vector<Eigen::MatrixXd> dfactor;
};

CholPair chol_pair(const Eigen::MatrixXd& omega, std::span<const Eigen::MatrixXd> domega);

}  // namespace eivlr
