#include "eivlr/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "eivlr/error.hpp"

namespace eivlr {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

void check_family(const Dataset& data, const EllipticalFamily& family) {
  if (family.dim() != data.m + data.p)
    throw DomainError("family dimension " + std::to_string(family.dim()) +
                      " differs from m + p = " + std::to_string(data.m + data.p));
}

Eigen::Map<const Eigen::RowVectorXd> flat(const MatrixXd& m) {
  return {m.data(), m.size()};
}

}  // namespace

Evaluation evaluate(const ParameterVector& theta, const Dataset& data,
                    const EllipticalFamily& family, Order order) {
  check_family(data, family);
  if (theta.dims() != data.dims()) throw DomainError("parameter dims differ from dataset dims");

  const int s = theta.dims().s();
  const int dim = theta.dims().dim();
  const double cinv = 1.0 / family.c();
  const bool want_grad = order != Order::value;
  const bool want_hess = order == Order::hessian;

  const VectorXd mu = mu_of(theta);
  const MatrixXd base = structural_scale(theta, family);

  FirstDerivatives first;
  std::vector<SecondDerivativeTerm> second;
  if (want_grad) first = first_derivatives(theta, family);
  if (want_hess) second = second_derivatives(theta, family);

  Evaluation ev;
  if (want_grad) ev.score = VectorXd::Zero(s);
  if (want_hess) ev.info = MatrixXd::Zero(s, s);

  const MatrixXd eye = MatrixXd::Identity(dim, dim);
  MatrixXd omega_inv(dim, dim);
  MatrixXd v(dim, s);
  MatrixXd b_flat(s, dim * dim);
  MatrixXd bt_flat(s, dim * dim);
  VectorXd traces(s);

  for (int i = 0; i < data.n(); ++i) {
    const MatrixXd omega = base + cinv * data.error_scale(i);
    Eigen::LLT<MatrixXd> llt(omega);
    if (llt.info() != Eigen::Success)
      throw NotPositiveDefinite("Omega_" + std::to_string(i) + " is not positive definite", i, -1);

    const MatrixXd& lower = llt.matrixLLT();
    double logdet = 0.0;
    for (int k = 0; k < dim; ++k) logdet += 2.0 * std::log(lower(k, k));

    const VectorXd d = data.z[i] - mu;
    const VectorXd x = llt.solve(d);
    const double u = std::max(0.0, d.dot(x));
    ev.loglik += -0.5 * logdet + family.log_p0(u);
    if (!want_grad) continue;

    omega_inv = llt.solve(eye);
    const double w = family.W(u);
    for (int j = 0; j < s; ++j) {
      traces(j) = omega_inv.cwiseProduct(first.omega[j]).sum();
      v.col(j) = first.omega[j] * x;
    }
    // h_j = d u / d theta_j
    const VectorXd h = -(v.transpose() * x) - 2.0 * (first.mu.transpose() * x);
    ev.score += -0.5 * traces + w * h;
    if (!want_hess) continue;

    const double wp = family.W_prime(u);
    for (int j = 0; j < s; ++j) {
      const MatrixXd b = omega_inv * first.omega[j];
      b_flat.row(j) = flat(b);
      const MatrixXd bt = b.transpose();
      bt_flat.row(j) = flat(bt);
    }
    const MatrixXd y = omega_inv * v;
    const MatrixXd t = omega_inv * first.mu;
    const MatrixXd vt = v.transpose() * t;
    const MatrixXd m_terms = 2.0 * (v.transpose() * y + vt + vt.transpose() + first.mu.transpose() * t);
    ev.info.noalias() -= 0.5 * b_flat * bt_flat.transpose();
    ev.info.noalias() -= wp * h * h.transpose();
    ev.info.noalias() -= w * m_terms;

    for (const auto& term : second) {
      const double val = 0.5 * omega_inv.cwiseProduct(term.omega).sum() +
                         w * (x.dot(term.omega * x) + 2.0 * term.mu.dot(x));
      ev.info(term.j, term.k) += val;
      if (term.j != term.k) ev.info(term.k, term.j) += val;
    }
  }
  if (want_hess) ev.info = 0.5 * (ev.info + ev.info.transpose()).eval();
  return ev;
}

double loglik(const ParameterVector& theta, const Dataset& data, const EllipticalFamily& family) {
  return evaluate(theta, data, family, Order::value).loglik;
}

VectorXd score(const ParameterVector& theta, const Dataset& data, const EllipticalFamily& family) {
  return evaluate(theta, data, family, Order::gradient).score;
}

MatrixXd observed_info(const ParameterVector& theta, const Dataset& data,
                       const EllipticalFamily& family) {
  return evaluate(theta, data, family, Order::hessian).info;
}

// ---------------------------------------------------------------------------

namespace {

MatrixXd floor_eigenvalues(const MatrixXd& m, double floor) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (m + m.transpose()));
  const VectorXd vals = eig.eigenvalues().cwiseMax(floor);
  return eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
}

VectorXd gather(const VectorXd& v, const std::vector<int>& idx) {
  VectorXd out(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) out(k) = v(idx[k]);
  return out;
}

MatrixXd gather(const MatrixXd& m, const std::vector<int>& idx) {
  MatrixXd out(idx.size(), idx.size());
  for (std::size_t a = 0; a < idx.size(); ++a)
    for (std::size_t b = 0; b < idx.size(); ++b) out(a, b) = m(idx[a], idx[b]);
  return out;
}

/// Newton direction from J restricted to the free block; J is made positive
/// definite by reflecting negative eigenvalues and flooring small ones.
VectorXd newton_direction(const MatrixXd& info_free, const VectorXd& grad_free, MatrixXd* inverse) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(info_free);
  const VectorXd& vals = eig.eigenvalues();
  const double top = std::max(1.0, vals.cwiseAbs().maxCoeff());
  VectorXd inv_vals(vals.size());
  for (Eigen::Index k = 0; k < vals.size(); ++k)
    inv_vals(k) = 1.0 / std::max(std::abs(vals(k)), 1e-8 * top);
  const MatrixXd& vecs = eig.eigenvectors();
  if (inverse) *inverse = vecs * inv_vals.asDiagonal() * vecs.transpose();
  return vecs * inv_vals.asDiagonal() * (vecs.transpose() * grad_free);
}

bool covariances_positive_definite(const ParameterVector& theta) {
  return Eigen::LLT<MatrixXd>(theta.sigma_q()).info() == Eigen::Success &&
         Eigen::LLT<MatrixXd>(theta.sigma_x()).info() == Eigen::Success;
}

struct Iterate {
  ParameterVector theta;
  Evaluation ev;
};

class Ascent {
 public:
  Ascent(const Dataset& data, const EllipticalFamily& family, std::vector<int> free)
      : data_(data), family_(family), free_(std::move(free)) {}

  const std::vector<int>& free() const { return free_; }

  VectorXd grad(const Iterate& it) const { return gather(it.ev.score, free_); }

  ParameterVector moved(const ParameterVector& theta, const VectorXd& step) const {
    ParameterVector out = theta;
    for (std::size_t k = 0; k < free_.size(); ++k) out[free_[k]] += step(k);
    return out;
  }

  std::optional<double> try_value(const ParameterVector& theta) const {
    if (!covariances_positive_definite(theta)) return std::nullopt;
    try {
      const double v = loglik(theta, data_, family_);
      if (!std::isfinite(v)) return std::nullopt;
      return v;
    } catch (const NotPositiveDefinite&) {
      return std::nullopt;
    }
  }

  Iterate at(const ParameterVector& theta, Order order) const {
    return {theta, evaluate(theta, data_, family_, order)};
  }

  /// Backtracking (Armijo) along dir; nullopt when no acceptable step.
  std::optional<Iterate> line_search(const Iterate& cur, const VectorXd& dir) const {
    const VectorXd g = grad(cur);
    const double slope = g.dot(dir);
    if (!(slope > 0.0)) return std::nullopt;
    const double f0 = cur.ev.loglik;
    const double noise = 1e-13 * std::max(1.0, std::abs(f0));
    double t = 1.0;
    for (int k = 0; k < 60; ++k, t *= 0.5) {
      const ParameterVector trial = moved(cur.theta, t * dir);
      const auto f = try_value(trial);
      if (!f) continue;
      if (*f >= f0 + 1e-4 * t * slope) return at(trial, Order::gradient);
      if (std::abs(*f - f0) <= noise) {
        // Rounding-level change in l: accept when the score shrinks.
        Iterate next = at(trial, Order::gradient);
        if (grad(next).cwiseAbs().maxCoeff() < g.cwiseAbs().maxCoeff()) return next;
      }
      if (t * dir.cwiseAbs().maxCoeff() < 1e-14 * (1.0 + cur.theta.values().cwiseAbs().maxCoeff()))
        break;
    }
    return std::nullopt;
  }

 private:
  const Dataset& data_;
  const EllipticalFamily& family_;
  std::vector<int> free_;
};

void fill_diagnostics(FitResult& fit, const Dataset& data, const std::vector<int>& free) {
  const MatrixXd jf = gather(fit.observed_info, free);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(jf, Eigen::EigenvaluesOnly);
  const VectorXd& vals = eig.eigenvalues();
  fit.diagnostics.min_info_eigenvalue = vals.minCoeff();
  const double max_abs = vals.cwiseAbs().maxCoeff();
  const double min_abs = vals.cwiseAbs().minCoeff();
  fit.diagnostics.info_condition =
      min_abs > 0.0 ? max_abs / min_abs : std::numeric_limits<double>::infinity();
  const auto& dims = data.dims();
  if (data.n() * dims.dim() <= dims.s())
    fit.diagnostics.warnings.push_back("fewer observed scalars than parameters; model not identified");
  if (!(vals.minCoeff() > 0.0))
    fit.diagnostics.warnings.push_back("observed information not positive definite at the optimum");
  else if (fit.diagnostics.info_condition > 1e12)
    fit.diagnostics.warnings.push_back("observed information is ill-conditioned (rank deficiency?)");
}

MatrixXd sample_cov(const std::vector<VectorXd>& rows, const VectorXd& mean) {
  MatrixXd cov = MatrixXd::Zero(mean.size(), mean.size());
  for (const auto& r : rows) cov += (r - mean) * (r - mean).transpose();
  return cov / static_cast<double>(rows.size());
}

}  // namespace

ParameterVector initial_estimate(const Dataset& data) {
  const int m = data.m;
  const int p = data.p;
  const int n = data.n();
  if (n < 1) throw InputError("empty_dataset", "cannot initialize from an empty dataset");

  std::vector<VectorXd> ys, xs;
  for (const auto& z : data.z) {
    ys.emplace_back(z.head(m));
    xs.emplace_back(z.tail(p));
  }
  VectorXd ybar = VectorXd::Zero(m), xbar = VectorXd::Zero(p);
  for (int i = 0; i < n; ++i) {
    ybar += ys[i];
    xbar += xs[i];
  }
  ybar /= n;
  xbar /= n;

  const MatrixXd sxx = sample_cov(xs, xbar);
  MatrixXd syx = MatrixXd::Zero(m, p);
  for (int i = 0; i < n; ++i) syx += (ys[i] - ybar) * (xs[i] - xbar).transpose();
  syx /= n;

  MatrixXd beta = MatrixXd::Zero(m, p);
  Eigen::LDLT<MatrixXd> ldlt(sxx);
  if (ldlt.info() == Eigen::Success && ldlt.isPositive() && sxx.trace() > 0.0)
    beta = ldlt.solve(syx.transpose()).transpose();
  if (!beta.allFinite()) beta.setZero();
  const VectorXd alpha = ybar - beta * xbar;

  MatrixXd mean_su = MatrixXd::Zero(p, p), mean_se = MatrixXd::Zero(m, m);
  for (int i = 0; i < n; ++i) {
    mean_su += data.sigma_u[i];
    mean_se += data.sigma_e[i];
  }
  mean_su /= n;
  mean_se /= n;

  std::vector<VectorXd> resid;
  for (int i = 0; i < n; ++i) resid.emplace_back(ys[i] - alpha - beta * xs[i]);
  const MatrixXd srr = sample_cov(resid, VectorXd::Zero(m));

  const MatrixXd sigma_x = floor_eigenvalues(sxx - mean_su, 1e-3);
  const MatrixXd sigma_q = floor_eigenvalues(srr - mean_se, 1e-3);
  return ParameterVector::pack(beta, alpha, xbar, sigma_q, sigma_x);
}

FitResult fit_mle(const Dataset& data, const EllipticalFamily& family,
                  std::optional<ParameterVector> init, std::optional<HypothesisSpec> constraint,
                  const FitOptions& options) {
  check_family(data, family);
  const ModelDims dims = data.dims();
  std::vector<int> free;
  if (constraint) {
    constraint->validate(dims);
    free = constraint->nuisance_indices(dims);
  } else {
    for (int j = 0; j < dims.s(); ++j) free.push_back(j);
  }

  ParameterVector theta0 = init ? *init : initial_estimate(data);
  if (theta0.dims() != dims) throw DomainError("initial value has wrong dims");
  if (constraint) theta0 = constraint->pin(theta0);

  if (!covariances_positive_definite(theta0))
    throw NotPositiveDefinite("initial Sigma_q / Sigma_x not positive definite", -1, -1);
  const Ascent ascent(data, family, free);
  // Throws NotPositiveDefinite when some Omega_i is infeasible at the start.
  Iterate cur = ascent.at(theta0, Order::hessian);

  MatrixXd h_inv;
  (void)newton_direction(gather(cur.ev.info, free), ascent.grad(cur), &h_inv);

  FitResult fit;
  fit.theta_hat = theta0;
  fit.constrained = constraint;
  double prev_ll = cur.ev.loglik;
  int stalls = 0;

  for (int it = 0; it < options.max_iter; ++it) {
    const VectorXd g = ascent.grad(cur);
    if (g.cwiseAbs().maxCoeff() < options.score_tol) {
      fit.converged = true;
      break;
    }
    fit.iterations = it + 1;

    std::optional<Iterate> next = ascent.line_search(cur, h_inv * g);
    if (next) {
      const VectorXd step = next->theta.values() - cur.theta.values();
      const VectorXd s = gather(step, free);
      const VectorXd y = g - ascent.grad(*next);
      const double sy = s.dot(y);
      if (sy > 1e-12 * s.norm() * y.norm()) {
        const double rho = 1.0 / sy;
        const VectorXd hy = h_inv * y;
        h_inv += (rho * rho * y.dot(hy) + rho) * s * s.transpose() -
                 rho * (hy * s.transpose() + s * hy.transpose());
      }
    } else {
      ++fit.fallback_steps;
      const Iterate full = ascent.at(cur.theta, Order::hessian);
      const VectorXd dir = newton_direction(gather(full.ev.info, free), g, &h_inv);
      next = ascent.line_search(cur, dir);
      if (!next) next = ascent.line_search(cur, g / std::max(1.0, g.norm()));
      if (!next) break;
    }
    cur = std::move(*next);

    const double rel = std::abs(cur.ev.loglik - prev_ll) / std::max(1.0, std::abs(prev_ll));
    stalls = rel < options.rel_loglik_tol ? stalls + 1 : 0;
    prev_ll = cur.ev.loglik;
    if (stalls > 20) break;
  }

  const Iterate final = ascent.at(cur.theta, Order::hessian);
  fit.theta_hat = final.theta;
  fit.loglik = final.ev.loglik;
  fit.score_norm = ascent.grad(final).cwiseAbs().maxCoeff();
  fit.observed_info = final.ev.info;
  fit.converged = fit.score_norm < options.score_tol;
  fill_diagnostics(fit, data, free);
  if (!fit.converged)
    throw FitFailure("maximum likelihood fit did not converge (score norm " +
                         std::to_string(fit.score_norm) + " after " +
                         std::to_string(fit.iterations) + " iterations)",
                     fit);
  return fit;
}

}  // namespace eivlr
