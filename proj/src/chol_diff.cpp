#include "eivlr/chol_diff.hpp"

#include <cmath>
#include <string>

#include "eivlr/error.hpp"

namespace eivlr {

using Eigen::MatrixXd;

MatrixXd chol(const MatrixXd& omega) {
  const auto n = omega.rows();
  if (omega.cols() != n) throw DomainError("chol: matrix is not square");
  MatrixXd p = MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double diag = omega(j, j);
    for (Eigen::Index k = 0; k < j; ++k) diag -= p(j, k) * p(j, k);
    if (!(diag > 0.0) || !std::isfinite(diag))
      throw NotPositiveDefinite("chol: non-positive pivot at column " + std::to_string(j), -1,
                                static_cast<long>(j));
    const double pjj = std::sqrt(diag);
    p(j, j) = pjj;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double v = omega(i, j);
      for (Eigen::Index k = 0; k < j; ++k) v -= p(i, k) * p(j, k);
      p(i, j) = v / pjj;
    }
  }
  return p;
}

MatrixXd chol_derivative(const MatrixXd& factor, const MatrixXd& domega) {
  const auto n = factor.rows();
  if (factor.cols() != n || domega.rows() != n || domega.cols() != n)
    throw DomainError("chol_derivative: dimension mismatch");
  MatrixXd dp = MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double pjj = factor(j, j);
    double v = domega(j, j);
    for (Eigen::Index k = 0; k < j; ++k) v -= 2.0 * factor(j, k) * dp(j, k);
    const double dpjj = v / (2.0 * pjj);
    dp(j, j) = dpjj;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double w = domega(i, j);
      for (Eigen::Index k = 0; k < j; ++k) w -= dp(i, k) * factor(j, k) + factor(i, k) * dp(j, k);
      w -= factor(i, j) * dpjj;
      dp(i, j) = w / pjj;
    }
  }
  return dp;
}

std::vector<MatrixXd> chol_dtheta(const MatrixXd& factor, std::span<const MatrixXd> domega) {
  std::vector<MatrixXd> out;
  out.reserve(domega.size());
  for (const auto& d : domega) out.push_back(chol_derivative(factor, d));
  return out;
}

CholPair chol_pair(const MatrixXd& omega, std::span<const MatrixXd> domega) {
  CholPair pair{chol(omega), {}};
  pair.dfactor = chol_dtheta(pair.factor, domega);
  return pair;
}

}  // namespace eivlr
