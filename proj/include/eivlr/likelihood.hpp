#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "eivlr/elliptical.hpp"
#include "eivlr/model.hpp"

namespace eivlr {

enum class Order { value, gradient, hessian };

/// Log-likelihood and, depending on `order`, the score vector and the
/// observed information J = -d^2 l / d theta d theta^T.
struct Evaluation {
  double loglik = 0.0;
  Eigen::VectorXd score;
  Eigen::MatrixXd info;
};

/// Accumulates per-observation terms in index order. Throws
/// NotPositiveDefinite (with the observation index) when some Omega_i fails
/// to factor.
Evaluation evaluate(const ParameterVector& theta, const Dataset& data,
                    const EllipticalFamily& family, Order order);

double loglik(const ParameterVector& theta, const Dataset& data, const EllipticalFamily& family);
Eigen::VectorXd score(const ParameterVector& theta, const Dataset& data,
                      const EllipticalFamily& family);
Eigen::MatrixXd observed_info(const ParameterVector& theta, const Dataset& data,
                              const EllipticalFamily& family);

struct FitOptions {
  double score_tol = 1e-8;
  double rel_loglik_tol = 1e-12;
  int max_iter = 500;
};

/// Identifiability / conditioning of the fitted problem.
struct FitDiagnostics {
  double min_info_eigenvalue = 0.0;
  double info_condition = 0.0;
  std::vector<std::string> warnings;
};

struct FitResult {
  ParameterVector theta_hat;
  double loglik = 0.0;
  /// max |U_j| over the free coordinates
  double score_norm = 0.0;
  Eigen::MatrixXd observed_info;
  int iterations = 0;
  int fallback_steps = 0;
  bool converged = false;
  std::optional<HypothesisSpec> constrained;
  FitDiagnostics diagnostics;
};

class FitFailure : public std::runtime_error {
 public:
  FitFailure(const std::string& what, FitResult best)
      : std::runtime_error(what), best_(std::move(best)) {}
  const FitResult& best() const noexcept { return best_; }

 private:
  FitResult best_;
};

/// Moment-based starting point: least squares of Y on X for (alpha, beta),
/// sample mean of X for mu_x, and sample covariances minus the average known
/// error scales for Sigma_x and Sigma_q (eigenvalues floored at 1e-3).
ParameterVector initial_estimate(const Dataset& data);

/// Maximizes the log-likelihood. With a constraint, psi is frozen at psi0 and
/// only the nuisance coordinates move.
///
/// Quasi-Newton (BFGS on the inverse Hessian) driven by the analytic score.
/// When the BFGS direction does not give an acceptable step, a Newton step
/// on the observed information is used instead (eigenvalues flipped/floored
/// when J is not positive definite). Trial points where Sigma_q, Sigma_x or
/// some Omega_i is not positive definite are rejected by backtracking.
///
/// Throws NotPositiveDefinite if the start is infeasible and FitFailure (with
/// the best iterate) if the score tolerance is not reached.
FitResult fit_mle(const Dataset& data, const EllipticalFamily& family,
                  std::optional<ParameterVector> init = std::nullopt,
                  std::optional<HypothesisSpec> constraint = std::nullopt,
                  const FitOptions& options = {});

}  // namespace eivlr
