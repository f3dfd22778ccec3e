#include "eivlr/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "eivlr/chol_diff.hpp"
#include "eivlr/error.hpp"

namespace eivlr {

using Eigen::MatrixXd;
using Eigen::VectorXd;

Eigen::VectorXd vech(const MatrixXd& m) {
  const int d = static_cast<int>(m.rows());
  VectorXd v(d * (d + 1) / 2);
  int pos = 0;
  for (int c = 0; c < d; ++c)
    for (int r = c; r < d; ++r) v(pos++) = m(r, c);
  return v;
}

Eigen::MatrixXd unvech(const VectorXd& v, int order) {
  if (v.size() != order * (order + 1) / 2) throw DomainError("unvech: length does not match order");
  MatrixXd m(order, order);
  int pos = 0;
  for (int c = 0; c < order; ++c)
    for (int r = c; r < order; ++r) {
      m(r, c) = v(pos);
      m(c, r) = v(pos);
      ++pos;
    }
  return m;
}

int vech_index(int row, int col, int order) {
  if (row < col) std::swap(row, col);
  return col * order - col * (col - 1) / 2 + (row - col);
}

ParamBlock ModelDims::block_of(int j) const {
  if (j < alpha_offset()) return ParamBlock::beta;
  if (j < mu_x_offset()) return ParamBlock::alpha;
  if (j < sigma_q_offset()) return ParamBlock::mu_x;
  if (j < sigma_x_offset()) return ParamBlock::sigma_q;
  return ParamBlock::sigma_x;
}

// ---------------------------------------------------------------------------

ParameterVector::ParameterVector(ModelDims dims) : dims_(dims), theta_(VectorXd::Zero(dims.s())) {}

ParameterVector::ParameterVector(ModelDims dims, VectorXd theta)
    : dims_(dims), theta_(std::move(theta)) {
  if (theta_.size() != dims_.s()) throw DomainError("parameter vector length does not match dims");
}

ParameterVector ParameterVector::pack(const MatrixXd& beta, const VectorXd& alpha,
                                      const VectorXd& mu_x, const MatrixXd& sigma_q,
                                      const MatrixXd& sigma_x) {
  ModelDims dims{static_cast<int>(beta.rows()), static_cast<int>(beta.cols())};
  ParameterVector theta(dims);
  theta.set_beta(beta);
  theta.set_alpha(alpha);
  theta.set_mu_x(mu_x);
  theta.set_sigma_q(sigma_q);
  theta.set_sigma_x(sigma_x);
  return theta;
}

MatrixXd ParameterVector::beta() const {
  return Eigen::Map<const MatrixXd>(theta_.data() + dims_.beta_offset(), dims_.m, dims_.p);
}

VectorXd ParameterVector::alpha() const { return theta_.segment(dims_.alpha_offset(), dims_.m); }

VectorXd ParameterVector::mu_x() const { return theta_.segment(dims_.mu_x_offset(), dims_.p); }

MatrixXd ParameterVector::sigma_q() const {
  return unvech(theta_.segment(dims_.sigma_q_offset(), dims_.m * (dims_.m + 1) / 2), dims_.m);
}

MatrixXd ParameterVector::sigma_x() const {
  return unvech(theta_.segment(dims_.sigma_x_offset(), dims_.p * (dims_.p + 1) / 2), dims_.p);
}

void ParameterVector::set_beta(const MatrixXd& beta) {
  if (beta.rows() != dims_.m || beta.cols() != dims_.p) throw DomainError("beta has wrong shape");
  Eigen::Map<MatrixXd>(theta_.data() + dims_.beta_offset(), dims_.m, dims_.p) = beta;
}

void ParameterVector::set_alpha(const VectorXd& alpha) {
  if (alpha.size() != dims_.m) throw DomainError("alpha has wrong length");
  theta_.segment(dims_.alpha_offset(), dims_.m) = alpha;
}

void ParameterVector::set_mu_x(const VectorXd& mu_x) {
  if (mu_x.size() != dims_.p) throw DomainError("mu_x has wrong length");
  theta_.segment(dims_.mu_x_offset(), dims_.p) = mu_x;
}

void ParameterVector::set_sigma_q(const MatrixXd& sigma_q) {
  if (sigma_q.rows() != dims_.m || sigma_q.cols() != dims_.m) throw DomainError("Sigma_q has wrong shape");
  theta_.segment(dims_.sigma_q_offset(), dims_.m * (dims_.m + 1) / 2) = vech(sigma_q);
}

void ParameterVector::set_sigma_x(const MatrixXd& sigma_x) {
  if (sigma_x.rows() != dims_.p || sigma_x.cols() != dims_.p) throw DomainError("Sigma_x has wrong shape");
  theta_.segment(dims_.sigma_x_offset(), dims_.p * (dims_.p + 1) / 2) = vech(sigma_x);
}

// ---------------------------------------------------------------------------

MatrixXd Dataset::error_scale(int i) const {
  MatrixXd e(m + p, m + p);
  e.topLeftCorner(m, m) = sigma_e[i];
  e.topRightCorner(m, p) = sigma_ue[i].transpose();
  e.bottomLeftCorner(p, m) = sigma_ue[i];
  e.bottomRightCorner(p, p) = sigma_u[i];
  return e;
}

void Dataset::validate() const {
  if (m < 1 || p < 1) throw InputError("bad_dims", "m and p must be positive");
  const auto n_rows = z.size();
  if (sigma_e.size() != n_rows || sigma_ue.size() != n_rows || sigma_u.size() != n_rows)
    throw InputError("bad_shape", "per-observation matrix counts differ from the number of observations");
  if (n_rows == 0) throw InputError("empty_dataset", "dataset has no observations");

  for (int i = 0; i < n(); ++i) {
    const std::string where = "observation " + std::to_string(i);
    if (z[i].size() != m + p) throw InputError("bad_shape", where + ": z has wrong length");
    if (sigma_e[i].rows() != m || sigma_e[i].cols() != m || sigma_ue[i].rows() != p ||
        sigma_ue[i].cols() != m || sigma_u[i].rows() != p || sigma_u[i].cols() != p)
      throw InputError("bad_shape", where + ": error matrix has wrong shape");
    if (!z[i].allFinite() || !sigma_e[i].allFinite() || !sigma_ue[i].allFinite() ||
        !sigma_u[i].allFinite())
      throw InputError("non_finite", where + ": non-finite value");
    const MatrixXd e = error_scale(i);
    const double scale = std::max(1.0, e.cwiseAbs().maxCoeff());
    if ((e - e.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
      throw InputError("not_symmetric", where + ": Sigma_e / Sigma_u not symmetric");
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(e, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-12 * scale)
      throw NotPositiveDefinite(where + ": error scale block is not positive semidefinite", i, -1);
  }
}

void HypothesisSpec::validate(const ModelDims& dims) const {
  if (psi_indices.empty()) throw InputError("bad_hypothesis", "hypothesis needs at least one index");
  if (psi0.size() != q()) throw InputError("bad_hypothesis", "psi0 length differs from index count");
  std::vector<int> sorted = psi_indices;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw InputError("bad_hypothesis", "hypothesis indices must be distinct");
  for (int idx : psi_indices)
    if (idx < 0 || idx >= dims.m * dims.p)
      throw InputError("bad_hypothesis", "hypothesis index " + std::to_string(idx) + " outside vec(beta)");
  if (!psi0.allFinite()) throw InputError("bad_hypothesis", "psi0 must be finite");
}

std::vector<int> HypothesisSpec::nuisance_indices(const ModelDims& dims) const {
  std::vector<int> out;
  for (int j = 0; j < dims.s(); ++j)
    if (std::find(psi_indices.begin(), psi_indices.end(), j) == psi_indices.end()) out.push_back(j);
  return out;
}

std::vector<int> HypothesisSpec::partition_order(const ModelDims& dims) const {
  std::vector<int> order = psi_indices;
  const auto rest = nuisance_indices(dims);
  order.insert(order.end(), rest.begin(), rest.end());
  return order;
}

ParameterVector HypothesisSpec::pin(const ParameterVector& theta) const {
  ParameterVector out = theta;
  for (int k = 0; k < q(); ++k) out[psi_indices[k]] = psi0(k);
  return out;
}

// ---------------------------------------------------------------------------

VectorXd mu_of(const ParameterVector& theta) {
  const auto& dims = theta.dims();
  VectorXd mu(dims.dim());
  const VectorXd mu_x = theta.mu_x();
  mu.head(dims.m) = theta.alpha() + theta.beta() * mu_x;
  mu.tail(dims.p) = mu_x;
  return mu;
}

namespace {

MatrixXd assemble_scale(const MatrixXd& beta, const MatrixXd& sigma_q, const MatrixXd& sigma_x) {
  const auto m = beta.rows();
  const auto p = beta.cols();
  MatrixXd omega(m + p, m + p);
  const MatrixXd bs = beta * sigma_x;
  omega.topLeftCorner(m, m) = bs * beta.transpose() + sigma_q;
  omega.topRightCorner(m, p) = bs;
  omega.bottomLeftCorner(p, m) = bs.transpose();
  omega.bottomRightCorner(p, p) = sigma_x;
  return omega;
}

/// d theta / d theta_j split into its blocks.
struct UnitDirection {
  ParamBlock block;
  MatrixXd beta;     // m x p
  VectorXd alpha;    // m
  VectorXd mu_x;     // p
  MatrixXd sigma_q;  // m x m
  MatrixXd sigma_x;  // p x p
};

MatrixXd symmetric_unit(int order, int offset) {
  MatrixXd f = MatrixXd::Zero(order, order);
  int pos = 0;
  for (int c = 0; c < order; ++c)
    for (int r = c; r < order; ++r, ++pos)
      if (pos == offset) {
        f(r, c) = 1.0;
        f(c, r) = 1.0;
      }
  return f;
}

UnitDirection unit_direction(const ModelDims& dims, int j) {
  const int m = dims.m;
  const int p = dims.p;
  UnitDirection dir{dims.block_of(j), MatrixXd::Zero(m, p), VectorXd::Zero(m), VectorXd::Zero(p),
                    MatrixXd::Zero(m, m), MatrixXd::Zero(p, p)};
  switch (dir.block) {
    case ParamBlock::beta: {
      const int k = j - dims.beta_offset();
      dir.beta(k % m, k / m) = 1.0;
      break;
    }
    case ParamBlock::alpha:
      dir.alpha(j - dims.alpha_offset()) = 1.0;
      break;
    case ParamBlock::mu_x:
      dir.mu_x(j - dims.mu_x_offset()) = 1.0;
      break;
    case ParamBlock::sigma_q:
      dir.sigma_q = symmetric_unit(m, j - dims.sigma_q_offset());
      break;
    case ParamBlock::sigma_x:
      dir.sigma_x = symmetric_unit(p, j - dims.sigma_x_offset());
      break;
  }
  return dir;
}

bool has_second_derivative(ParamBlock a, ParamBlock b) {
  if (a != ParamBlock::beta) std::swap(a, b);
  if (a != ParamBlock::beta) return false;
  return b == ParamBlock::beta || b == ParamBlock::mu_x || b == ParamBlock::sigma_x;
}

}  // namespace

MatrixXd structural_scale(const ParameterVector& theta, const EllipticalFamily& family) {
  return assemble_scale(theta.beta(), theta.sigma_q(), theta.sigma_x()) / family.c();
}

MatrixXd omega_of(const ParameterVector& theta, int i, const Dataset& data,
                  const EllipticalFamily& family) {
  MatrixXd omega = structural_scale(theta, family) + data.error_scale(i) / family.c();
  try {
    (void)chol(omega);
  } catch (const NotPositiveDefinite& e) {
    throw NotPositiveDefinite("Omega_" + std::to_string(i) + " is not positive definite", i, e.pivot());
  }
  return omega;
}

FirstDerivatives first_derivatives(const ParameterVector& theta, const EllipticalFamily& family) {
  const auto& dims = theta.dims();
  const int m = dims.m;
  const int p = dims.p;
  const int s = dims.s();
  const MatrixXd beta = theta.beta();
  const MatrixXd sx = theta.sigma_x();
  const VectorXd mu_x = theta.mu_x();
  const double cinv = 1.0 / family.c();

  FirstDerivatives out{MatrixXd::Zero(m + p, s), std::vector<MatrixXd>(s)};
  for (int j = 0; j < s; ++j) {
    const UnitDirection d = unit_direction(dims, j);
    out.mu.col(j).head(m) = d.beta * mu_x + d.alpha + beta * d.mu_x;
    out.mu.col(j).tail(p) = d.mu_x;

    MatrixXd w = MatrixXd::Zero(m + p, m + p);
    if (d.block == ParamBlock::beta || d.block == ParamBlock::sigma_q ||
        d.block == ParamBlock::sigma_x) {
      const MatrixXd top_right = d.beta * sx + beta * d.sigma_x;
      w.topLeftCorner(m, m) = d.beta * sx * beta.transpose() + beta * sx * d.beta.transpose() +
                              beta * d.sigma_x * beta.transpose() + d.sigma_q;
      w.topRightCorner(m, p) = top_right;
      w.bottomLeftCorner(p, m) = top_right.transpose();
      w.bottomRightCorner(p, p) = d.sigma_x;
    }
    out.omega[j] = cinv * w;
  }
  return out;
}

std::vector<SecondDerivativeTerm> second_derivatives(const ParameterVector& theta,
                                                     const EllipticalFamily& family) {
  const auto& dims = theta.dims();
  const int m = dims.m;
  const int p = dims.p;
  const int s = dims.s();
  const MatrixXd beta = theta.beta();
  const MatrixXd sx = theta.sigma_x();
  const double cinv = 1.0 / family.c();

  std::vector<UnitDirection> dirs;
  dirs.reserve(s);
  for (int j = 0; j < s; ++j) dirs.push_back(unit_direction(dims, j));

  std::vector<SecondDerivativeTerm> terms;
  for (int j = 0; j < s; ++j) {
    for (int k = j; k < s; ++k) {
      const auto& a = dirs[j];
      const auto& b = dirs[k];
      if (!has_second_derivative(a.block, b.block)) continue;

      VectorXd mu = VectorXd::Zero(m + p);
      mu.head(m) = a.beta * b.mu_x + b.beta * a.mu_x;

      MatrixXd w = MatrixXd::Zero(m + p, m + p);
      w.topLeftCorner(m, m) = a.beta * sx * b.beta.transpose() + b.beta * sx * a.beta.transpose() +
                              a.beta * b.sigma_x * beta.transpose() +
                              beta * b.sigma_x * a.beta.transpose() +
                              b.beta * a.sigma_x * beta.transpose() +
                              beta * a.sigma_x * b.beta.transpose();
      const MatrixXd top_right = a.beta * b.sigma_x + b.beta * a.sigma_x;
      w.topRightCorner(m, p) = top_right;
      w.bottomLeftCorner(p, m) = top_right.transpose();

      if (mu.isZero(0.0) && w.isZero(0.0)) continue;
      terms.push_back({j, k, std::move(mu), cinv * w});
    }
  }
  return terms;
}

std::vector<VectorXd> mu_dtheta(const ParameterVector& theta) {
  // c does not enter mu; any family will do.
  const auto first = first_derivatives(theta, EllipticalFamily::normal(theta.dims().dim()));
  std::vector<VectorXd> out;
  for (int j = 0; j < first.mu.cols(); ++j) out.emplace_back(first.mu.col(j));
  return out;
}

std::vector<MatrixXd> omega_dtheta(const ParameterVector& theta, const EllipticalFamily& family) {
  return first_derivatives(theta, family).omega;
}

std::vector<std::vector<VectorXd>> mu_d2theta(const ParameterVector& theta) {
  const auto& dims = theta.dims();
  const int s = dims.s();
  std::vector<std::vector<VectorXd>> out(s, std::vector<VectorXd>(s, VectorXd::Zero(dims.dim())));
  for (const auto& t : second_derivatives(theta, EllipticalFamily::normal(dims.dim()))) {
    out[t.j][t.k] = t.mu;
    out[t.k][t.j] = t.mu;
  }
  return out;
}

std::vector<std::vector<MatrixXd>> omega_d2theta(const ParameterVector& theta,
                                                 const EllipticalFamily& family) {
  const auto& dims = theta.dims();
  const int s = dims.s();
  std::vector<std::vector<MatrixXd>> out(
      s, std::vector<MatrixXd>(s, MatrixXd::Zero(dims.dim(), dims.dim())));
  for (const auto& t : second_derivatives(theta, family)) {
    out[t.j][t.k] = t.omega;
    out[t.k][t.j] = t.omega;
  }
  return out;
}

}  // namespace eivlr
