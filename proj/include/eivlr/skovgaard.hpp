#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "eivlr/elliptical.hpp"
#include "eivlr/likelihood.hpp"
#include "eivlr/model.hpp"

namespace eivlr {

/// Cholesky factors P_i(theta), their derivatives dP_i/dtheta_j, mu(theta)
/// and dmu/dtheta at one parameter point.
struct ReferenceFrame {
  ParameterVector theta;
  Eigen::VectorXd mu;
  Eigen::MatrixXd mu_d;                          // dim x s
  std::vector<Eigen::MatrixXd> chol;             // n
  std::vector<std::vector<Eigen::MatrixXd>> dchol;  // n x s

  /// Data implied by (theta, a): z_i = P_i a_i + mu.
  Eigen::VectorXd reconstruct(int i, const Eigen::VectorXd& a_i) const {
    return chol[i] * a_i + mu;
  }
};

ReferenceFrame reference_frame(const ParameterVector& theta, const Dataset& data,
                               const EllipticalFamily& family);

/// a_i = P_i(theta_hat)^{-1} (z_i - mu(theta_hat)); maximal invariant of
/// the location-scale structure, hence ancillary. Keeps the frame at
/// theta_hat for the sample-space derivatives.
struct AncillaryStatistic {
  std::vector<Eigen::VectorXd> a;
  ReferenceFrame frame;
};

AncillaryStatistic ancillary(const ParameterVector& theta_hat, const Dataset& data,
                             const EllipticalFamily& family);
AncillaryStatistic ancillary(const FitResult& fit_hat, const Dataset& data,
                             const EllipticalFamily& family);

/// Derivatives of l(theta; theta_hat, a) with respect to theta_hat, the data
/// written as z_i = P_i(theta_hat) a_i + mu(theta_hat):
///   ell_prime(k)  = dl / dtheta_hat_k                 at theta = theta_eval
///   u_prime(j, k) = d^2 l / dtheta_j dtheta_hat_k     at theta = theta_eval
///   j_bar(j, k)   = the same mixed derivative with theta = theta_hat = theta_eval
/// Rows of u_prime / j_bar follow the score, columns follow theta_hat.
struct SampleSpaceDerivatives {
  Eigen::VectorXd ell_prime;
  Eigen::MatrixXd u_prime;
  Eigen::MatrixXd j_bar;
};

SampleSpaceDerivatives sample_space_derivs(const ParameterVector& theta_eval,
                                           const AncillaryStatistic& anc, const Dataset& data,
                                           const EllipticalFamily& family, bool with_j_bar = true);

/// Everything the correction factor needs, already evaluated.
struct RhoInputs {
  Eigen::MatrixXd j_hat;
  Eigen::MatrixXd j_tilde;
  Eigen::VectorXd u_tilde;
  Eigen::MatrixXd u_prime_tilde;
  Eigen::MatrixXd j_bar;
  Eigen::VectorXd ell_prime_hat;
  Eigen::VectorXd ell_prime_tilde;
  double lr = 0.0;
  std::vector<int> nuisance;
  int q = 0;
};

struct RhoResult {
  double log_rho = 0.0;
  bool ok = false;
  std::string failure;
};

/// log rho =  1/2 log|J_hat| - log|U'~| + 1/2 log|J~_ww| - 1/2 log|Jbar_ww|
///          + 1/2 log|Jbar| + q/2 log(U~^T Jbar^{-1} U~)
///          - (q/2 - 1) log LR - log((l'^ - l'~)^T (U'~)^{-1} U~)
/// with every determinant and scalar required to be positive; otherwise
/// ok = false and `failure` names the offending term.
RhoResult log_rho_from(const RhoInputs& in);

RhoInputs rho_inputs(const FitResult& fit_hat, const FitResult& fit_tilde,
                     const AncillaryStatistic& anc, const Dataset& data,
                     const EllipticalFamily& family, const HypothesisSpec& hyp);

RhoResult rho(const FitResult& fit_hat, const FitResult& fit_tilde, const AncillaryStatistic& anc,
              const Dataset& data, const EllipticalFamily& family, const HypothesisSpec& hyp);

struct AdjustedStatistics {
  double lr_star;   // LR (1 - log(rho) / LR)^2
  double lr_dstar;  // LR - 2 log(rho)
};

AdjustedStatistics adjust(double lr, double log_rho);

/// P(chi^2_q > x); 1 for x <= 0.
double chi2_upper_tail(double x, int q);
double chi2_quantile(double prob, int q);

struct TestFlags {
  bool lr_near_zero = false;
  bool rho_nonpositive_determinant = false;
  bool fit_warning = false;
};

struct TestReport {
  double lr = 0.0;
  /// 0 when LR is near zero, NaN when a determinant in rho is not positive
  double log_rho = 0.0;
  double lr_star = 0.0;
  double lr_dstar = 0.0;
  int q = 0;
  double p_lr = 1.0;
  double p_lr_star = 1.0;
  double p_lr_dstar = 1.0;
  TestFlags flags;
  std::string rho_failure;
  HypothesisSpec hypothesis;
  FitResult fit_hat;
  FitResult fit_tilde;
};

/// Below this LR the correction is skipped (LR^{q/2-1} degenerates).
inline constexpr double kLrNearZero = 1e-10;

struct TestOptions {
  FitOptions fit;
  std::optional<ParameterVector> init;
};

/// Fits the full and the null model, then reports LR, LR*_a and LR**_a.
/// Fit failures propagate as FitFailure / NotPositiveDefinite.
TestReport lr_test(const Dataset& data, const EllipticalFamily& family, const HypothesisSpec& hyp,
                   const TestOptions& options = {});

}  // namespace eivlr
