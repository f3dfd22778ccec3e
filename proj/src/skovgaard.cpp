#include "eivlr/skovgaard.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <boost/math/distributions/chi_squared.hpp>

#include "eivlr/chol_diff.hpp"
#include "eivlr/error.hpp"

namespace eivlr {

using Eigen::MatrixXd;
using Eigen::VectorXd;

ReferenceFrame reference_frame(const ParameterVector& theta, const Dataset& data,
                               const EllipticalFamily& family) {
  const FirstDerivatives first = first_derivatives(theta, family);
  ReferenceFrame frame{theta, mu_of(theta), first.mu, {}, {}};
  frame.chol.reserve(data.n());
  frame.dchol.reserve(data.n());
  for (int i = 0; i < data.n(); ++i) {
    const MatrixXd omega = omega_of(theta, i, data, family);
    frame.chol.push_back(chol(omega));
    frame.dchol.push_back(chol_dtheta(frame.chol.back(), first.omega));
  }
  return frame;
}

AncillaryStatistic ancillary(const ParameterVector& theta_hat, const Dataset& data,
                             const EllipticalFamily& family) {
  AncillaryStatistic anc{{}, reference_frame(theta_hat, data, family)};
  anc.a.reserve(data.n());
  for (int i = 0; i < data.n(); ++i)
    anc.a.push_back(
        anc.frame.chol[i].triangularView<Eigen::Lower>().solve(data.z[i] - anc.frame.mu));
  return anc;
}

AncillaryStatistic ancillary(const FitResult& fit_hat, const Dataset& data,
                             const EllipticalFamily& family) {
  return ancillary(fit_hat.theta_hat, data, family);
}

namespace {

struct MixedDerivatives {
  VectorXd ell_prime;
  MatrixXd u_prime;
};

/// Derivatives of l(theta; ref, a) w.r.t. the reference point, evaluated at
/// theta_eval with the data represented through `frame`.
MixedDerivatives mixed_derivatives(const ParameterVector& theta_eval, const ReferenceFrame& frame,
                                   const std::vector<VectorXd>& a, const Dataset& data,
                                   const EllipticalFamily& family) {
  const int s = theta_eval.dims().s();
  const int dim = theta_eval.dims().dim();
  const double cinv = 1.0 / family.c();
  const VectorXd mu = mu_of(theta_eval);
  const MatrixXd base = structural_scale(theta_eval, family);
  const FirstDerivatives first = first_derivatives(theta_eval, family);

  MixedDerivatives out{VectorXd::Zero(s), MatrixXd::Zero(s, s)};
  MatrixXd e(dim, s);
  MatrixXd v(dim, s);
  for (int i = 0; i < data.n(); ++i) {
    const MatrixXd omega = base + cinv * data.error_scale(i);
    Eigen::LLT<MatrixXd> llt(omega);
    if (llt.info() != Eigen::Success)
      throw NotPositiveDefinite("Omega_" + std::to_string(i) + " is not positive definite", i, -1);

    const VectorXd d = frame.reconstruct(i, a[i]) - mu;
    const VectorXd x = llt.solve(d);
    const double u = std::max(0.0, d.dot(x));
    const double w = family.W(u);
    const double wp = family.W_prime(u);

    // e_k = d z_i / d ref_k = P_k a_i + mu_k
    for (int k = 0; k < s; ++k) {
      e.col(k) = frame.dchol[i][k] * a[i] + frame.mu_d.col(k);
      v.col(k) = first.omega[k] * x;
    }
    const MatrixXd oe = llt.solve(e);
    const VectorXd we = e.transpose() * x;
    const VectorXd h = -(v.transpose() * x) - 2.0 * (first.mu.transpose() * x);

    out.ell_prime += 2.0 * w * we;
    out.u_prime.noalias() -= 2.0 * w * ((v + first.mu).transpose() * oe);
    out.u_prime.noalias() += 2.0 * wp * h * we.transpose();
  }
  return out;
}

}  // namespace

SampleSpaceDerivatives sample_space_derivs(const ParameterVector& theta_eval,
                                           const AncillaryStatistic& anc, const Dataset& data,
                                           const EllipticalFamily& family, bool with_j_bar) {
  MixedDerivatives at_eval = mixed_derivatives(theta_eval, anc.frame, anc.a, data, family);
  SampleSpaceDerivatives out{std::move(at_eval.ell_prime), std::move(at_eval.u_prime), {}};
  if (with_j_bar) {
    const ReferenceFrame moved = reference_frame(theta_eval, data, family);
    out.j_bar = mixed_derivatives(theta_eval, moved, anc.a, data, family).u_prime;
  }
  return out;
}

namespace {

struct SignedLogDet {
  double log_abs = 0.0;
  int sign = 0;
};

SignedLogDet signed_log_det(const MatrixXd& m) {
  if (m.size() == 0) return {0.0, 1};
  Eigen::PartialPivLU<MatrixXd> lu(m);
  const MatrixXd& packed = lu.matrixLU();
  SignedLogDet out{0.0, static_cast<int>(lu.permutationP().determinant())};
  for (Eigen::Index k = 0; k < packed.rows(); ++k) {
    const double piv = packed(k, k);
    if (piv == 0.0 || !std::isfinite(piv)) return {0.0, 0};
    if (piv < 0.0) out.sign = -out.sign;
    out.log_abs += std::log(std::abs(piv));
  }
  return out;
}

MatrixXd submatrix(const MatrixXd& m, const std::vector<int>& idx) {
  MatrixXd out(idx.size(), idx.size());
  for (std::size_t a = 0; a < idx.size(); ++a)
    for (std::size_t b = 0; b < idx.size(); ++b) out(a, b) = m(idx[a], idx[b]);
  return out;
}

}  // namespace

RhoResult log_rho_from(const RhoInputs& in) {
  RhoResult res;
  const auto positive_log_det = [&](const MatrixXd& m, const char* name, double& out) {
    const SignedLogDet ld = signed_log_det(m);
    if (ld.sign <= 0) {
      res.failure = std::string("non-positive determinant of ") + name;
      return false;
    }
    out = ld.log_abs;
    return true;
  };

  double ld_j_hat, ld_u_prime, ld_j_tilde_ww, ld_j_bar_ww, ld_j_bar;
  if (!positive_log_det(in.j_hat, "J_hat", ld_j_hat)) return res;
  if (!positive_log_det(in.u_prime_tilde, "U'_tilde", ld_u_prime)) return res;
  if (!positive_log_det(submatrix(in.j_tilde, in.nuisance), "J_tilde_ww", ld_j_tilde_ww)) return res;
  if (!positive_log_det(submatrix(in.j_bar, in.nuisance), "Jbar_ww", ld_j_bar_ww)) return res;
  if (!positive_log_det(in.j_bar, "Jbar", ld_j_bar)) return res;

  const double quad_j_bar = in.u_tilde.dot(in.j_bar.partialPivLu().solve(in.u_tilde));
  if (!(quad_j_bar > 0.0) || !std::isfinite(quad_j_bar)) {
    res.failure = "non-positive U~^T Jbar^-1 U~";
    return res;
  }
  const double quad_u_prime =
      (in.ell_prime_hat - in.ell_prime_tilde).dot(in.u_prime_tilde.partialPivLu().solve(in.u_tilde));
  if (!(quad_u_prime > 0.0) || !std::isfinite(quad_u_prime)) {
    res.failure = "non-positive (l'^ - l'~)^T (U'~)^-1 U~";
    return res;
  }
  if (!(in.lr > 0.0)) {
    res.failure = "non-positive LR";
    return res;
  }

  const double half_q = 0.5 * in.q;
  res.log_rho = 0.5 * ld_j_hat - ld_u_prime + 0.5 * ld_j_tilde_ww - 0.5 * ld_j_bar_ww +
                0.5 * ld_j_bar + half_q * std::log(quad_j_bar) - (half_q - 1.0) * std::log(in.lr) -
                std::log(quad_u_prime);
  res.ok = std::isfinite(res.log_rho);
  if (!res.ok) res.failure = "non-finite log rho";
  return res;
}

RhoInputs rho_inputs(const FitResult& fit_hat, const FitResult& fit_tilde,
                     const AncillaryStatistic& anc, const Dataset& data,
                     const EllipticalFamily& family, const HypothesisSpec& hyp) {
  const ParameterVector& theta_hat = fit_hat.theta_hat;
  const ParameterVector& theta_tilde = fit_tilde.theta_hat;
  const auto at_tilde = sample_space_derivs(theta_tilde, anc, data, family, true);
  const auto at_hat = sample_space_derivs(theta_hat, anc, data, family, false);

  RhoInputs in;
  in.j_hat = fit_hat.observed_info;
  in.j_tilde = fit_tilde.observed_info;
  in.u_tilde = score(theta_tilde, data, family);
  in.u_prime_tilde = at_tilde.u_prime;
  in.j_bar = at_tilde.j_bar;
  in.ell_prime_hat = at_hat.ell_prime;
  in.ell_prime_tilde = at_tilde.ell_prime;
  in.lr = 2.0 * (fit_hat.loglik - fit_tilde.loglik);
  in.nuisance = hyp.nuisance_indices(data.dims());
  in.q = hyp.q();
  return in;
}

RhoResult rho(const FitResult& fit_hat, const FitResult& fit_tilde, const AncillaryStatistic& anc,
              const Dataset& data, const EllipticalFamily& family, const HypothesisSpec& hyp) {
  return log_rho_from(rho_inputs(fit_hat, fit_tilde, anc, data, family, hyp));
}

AdjustedStatistics adjust(double lr, double log_rho) {
  if (log_rho == 0.0) return {lr, lr};
  const double f = 1.0 - log_rho / lr;
  return {lr * f * f, lr - 2.0 * log_rho};
}

double chi2_upper_tail(double x, int q) {
  if (!(x > 0.0)) return 1.0;
  if (std::isinf(x)) return 0.0;
  const boost::math::chi_squared dist(q);
  return boost::math::cdf(boost::math::complement(dist, x));
}

double chi2_quantile(double prob, int q) {
  const boost::math::chi_squared dist(q);
  return boost::math::quantile(dist, prob);
}

TestReport lr_test(const Dataset& data, const EllipticalFamily& family, const HypothesisSpec& hyp,
                   const TestOptions& options) {
  hyp.validate(data.dims());
  TestReport report;
  report.q = hyp.q();
  report.hypothesis = hyp;

  report.fit_hat = fit_mle(data, family, options.init, std::nullopt, options.fit);
  report.fit_tilde = fit_mle(data, family, hyp.pin(report.fit_hat.theta_hat), hyp, options.fit);

  // A constrained optimum above the unconstrained one means the full fit
  // stopped at an inferior local maximum; restart it from the null fit.
  const double slack = 1e-9 * std::max(1.0, std::abs(report.fit_hat.loglik));
  if (report.fit_tilde.loglik > report.fit_hat.loglik + slack) {
    FitResult retry =
        fit_mle(data, family, report.fit_tilde.theta_hat, std::nullopt, options.fit);
    if (retry.loglik > report.fit_hat.loglik) report.fit_hat = std::move(retry);
  }

  report.flags.fit_warning = !report.fit_hat.diagnostics.warnings.empty() ||
                             !report.fit_tilde.diagnostics.warnings.empty();
  report.lr = std::max(0.0, 2.0 * (report.fit_hat.loglik - report.fit_tilde.loglik));

  if (report.lr < kLrNearZero) {
    report.flags.lr_near_zero = true;
    report.log_rho = 0.0;
  } else {
    const auto anc = ancillary(report.fit_hat, data, family);
    const RhoResult r = rho(report.fit_hat, report.fit_tilde, anc, data, family, hyp);
    if (r.ok) {
      report.log_rho = r.log_rho;
    } else {
      report.flags.rho_nonpositive_determinant = true;
      report.rho_failure = r.failure;
      report.log_rho = std::numeric_limits<double>::quiet_NaN();
    }
  }

  if (std::isfinite(report.log_rho)) {
    const auto adj = adjust(report.lr, report.log_rho);
    report.lr_star = adj.lr_star;
    report.lr_dstar = adj.lr_dstar;
  } else {
    report.lr_star = report.lr;
    report.lr_dstar = report.lr;
  }
  report.p_lr = chi2_upper_tail(report.lr, report.q);
  report.p_lr_star = chi2_upper_tail(report.lr_star, report.q);
  report.p_lr_dstar = chi2_upper_tail(report.lr_dstar, report.q);
  return report;
}

}  // namespace eivlr
