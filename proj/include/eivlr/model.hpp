#pragma once

#include <vector>

#include <Eigen/Dense>

#include "eivlr/elliptical.hpp"

namespace eivlr {

/// Stacks the lower triangle of a square matrix column by column.
Eigen::VectorXd vech(const Eigen::MatrixXd& m);
/// Inverse of vech: rebuilds the symmetric matrix of order `order`.
Eigen::MatrixXd unvech(const Eigen::VectorXd& v, int order);
/// Position of entry (row, col), row >= col, inside vech of an order-d matrix.
int vech_index(int row, int col, int order);

enum class ParamBlock { beta, alpha, mu_x, sigma_q, sigma_x };

/// Dimensions of the model: m responses, p covariates.
///
/// theta = (vec beta, alpha, mu_x, vech Sigma_q, vech Sigma_x), so
/// s = m p + m + p + m(m+1)/2 + p(p+1)/2.
struct ModelDims {
  int m = 1;
  int p = 1;

  int dim() const { return m + p; }
  int s() const { return m * p + m + p + m * (m + 1) / 2 + p * (p + 1) / 2; }

  int beta_offset() const { return 0; }
  int alpha_offset() const { return m * p; }
  int mu_x_offset() const { return m * p + m; }
  int sigma_q_offset() const { return m * p + m + p; }
  int sigma_x_offset() const { return sigma_q_offset() + m * (m + 1) / 2; }

  ParamBlock block_of(int j) const;

  bool operator==(const ModelDims&) const = default;
};

class ParameterVector {
 public:
  ParameterVector() : ParameterVector(ModelDims{}) {}
  explicit ParameterVector(ModelDims dims);
  ParameterVector(ModelDims dims, Eigen::VectorXd theta);

  static ParameterVector pack(const Eigen::MatrixXd& beta, const Eigen::VectorXd& alpha,
                              const Eigen::VectorXd& mu_x, const Eigen::MatrixXd& sigma_q,
                              const Eigen::MatrixXd& sigma_x);

  const ModelDims& dims() const { return dims_; }
  int size() const { return static_cast<int>(theta_.size()); }

  const Eigen::VectorXd& values() const { return theta_; }
  Eigen::VectorXd& values() { return theta_; }
  double operator[](int j) const { return theta_(j); }
  double& operator[](int j) { return theta_(j); }

  Eigen::MatrixXd beta() const;
  Eigen::VectorXd alpha() const;
  Eigen::VectorXd mu_x() const;
  Eigen::MatrixXd sigma_q() const;
  Eigen::MatrixXd sigma_x() const;

  void set_beta(const Eigen::MatrixXd& beta);
  void set_alpha(const Eigen::VectorXd& alpha);
  void set_mu_x(const Eigen::VectorXd& mu_x);
  void set_sigma_q(const Eigen::MatrixXd& sigma_q);
  void set_sigma_x(const Eigen::MatrixXd& sigma_x);

 private:
  ModelDims dims_;
  Eigen::VectorXd theta_;
};

/// Observations Z_i = (Y_i, X_i) with their known error scale matrices.
struct Dataset {
  int m = 1;
  int p = 1;
  std::vector<Eigen::VectorXd> z;
  std::vector<Eigen::MatrixXd> sigma_e;   // m x m
  std::vector<Eigen::MatrixXd> sigma_ue;  // p x m
  std::vector<Eigen::MatrixXd> sigma_u;   // p x p

  ModelDims dims() const { return {m, p}; }
  int n() const { return static_cast<int>(z.size()); }

  /// [[Sigma_e, Sigma_ue^T], [Sigma_ue, Sigma_u]] for observation i.
  Eigen::MatrixXd error_scale(int i) const;

  /// Throws InputError on shape / finiteness / symmetry problems and
  /// NotPositiveDefinite (with the row index) when an error block is not PSD.
  void validate() const;
};

/// H0: vec(beta)[psi_indices] = psi0.
struct HypothesisSpec {
  std::vector<int> psi_indices;
  Eigen::VectorXd psi0;

  int q() const { return static_cast<int>(psi_indices.size()); }
  void validate(const ModelDims& dims) const;
  /// Complement of psi_indices in 0..s-1, ascending.
  std::vector<int> nuisance_indices(const ModelDims& dims) const;
  /// psi first, then the nuisance block.
  std::vector<int> partition_order(const ModelDims& dims) const;
  /// Copy of theta with psi pinned to psi0.
  ParameterVector pin(const ParameterVector& theta) const;
};

// ---------------------------------------------------------------------------
// Location and scale as functions of theta.

/// (alpha + beta mu_x, mu_x)
Eigen::VectorXd mu_of(const ParameterVector& theta);

/// c^{-1} [[beta Sx beta^T + Sq, beta Sx], [Sx beta^T, Sx]]: the part of
/// Omega_i shared by every observation.
Eigen::MatrixXd structural_scale(const ParameterVector& theta, const EllipticalFamily& family);

/// Omega_i(theta). Throws NotPositiveDefinite carrying i.
Eigen::MatrixXd omega_of(const ParameterVector& theta, int i, const Dataset& data,
                         const EllipticalFamily& family);

/// First derivatives: column j of `mu` is d mu / d theta_j and omega[j] is
/// d Omega_i / d theta_j (identical for every i).
struct FirstDerivatives {
  Eigen::MatrixXd mu;
  std::vector<Eigen::MatrixXd> omega;
};

/// One structurally nonzero second derivative, j <= k.
struct SecondDerivativeTerm {
  int j;
  int k;
  Eigen::VectorXd mu;
  Eigen::MatrixXd omega;
};

FirstDerivatives first_derivatives(const ParameterVector& theta, const EllipticalFamily& family);

/// Sparse list of the nonzero (j, k) blocks: (beta, beta), (beta, mu_x) and
/// (beta, Sigma_x). Every other pair vanishes identically.
std::vector<SecondDerivativeTerm> second_derivatives(const ParameterVector& theta,
                                                     const EllipticalFamily& family);

std::vector<Eigen::VectorXd> mu_dtheta(const ParameterVector& theta);
std::vector<Eigen::MatrixXd> omega_dtheta(const ParameterVector& theta,
                                          const EllipticalFamily& family);
/// Dense s x s views of the second derivatives (mostly zeros).
std::vector<std::vector<Eigen::VectorXd>> mu_d2theta(const ParameterVector& theta);
std::vector<std::vector<Eigen::MatrixXd>> omega_d2theta(const ParameterVector& theta,
                                                        const EllipticalFamily& family);

}  // namespace eivlr
