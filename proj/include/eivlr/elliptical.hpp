#pragma once

#include <random>
#include <string>

#include <Eigen/Dense>

namespace eivlr {

enum class FamilyKind { normal, student_t, power_exponential };

std::string to_string(FamilyKind kind);
FamilyKind family_kind_from_string(const std::string& name);

/// Elliptical density generator p0 for a q-variate family.
///
/// The density of Z ~ El_q(mu, Omega; p0) is |Omega|^{-1/2} p0(u) with
/// u = (z - mu)^T Omega^{-1} (z - mu). log_p0 includes the normalizing
/// constant so log-likelihoods are comparable across families. Var(Z) is
/// c() * Omega.
///
/// Supported generators:
///   normal              p0(u) ∝ exp(-u/2)
///   student_t(nu)       p0(u) ∝ (1 + u/nu)^{-(nu+q)/2},  nu > 2
///   power_exponential   p0(u) ∝ exp(-u^lambda / 2),      0 < lambda <= 1
///
/// Instances are immutable; sharing across threads is safe.
class EllipticalFamily {
 public:
  static EllipticalFamily normal(int dim);
  static EllipticalFamily student_t(double nu, int dim);
  static EllipticalFamily power_exponential(double lambda, int dim);

  /// Dispatches on kind; `shape` is ignored for the normal family.
  static EllipticalFamily make(FamilyKind kind, double shape, int dim);

  FamilyKind kind() const { return kind_; }
  double shape() const { return shape_; }
  int dim() const { return dim_; }

  /// Same generator in another ambient dimension.
  EllipticalFamily with_dim(int dim) const { return make(kind_, shape_, dim); }

  double log_p0(double u) const;
  /// d log p0 / du
  double W(double u) const;
  /// d^2 log p0 / du^2
  double W_prime(double u) const;
  /// Var(Z) = c * Omega
  double c() const { return c_; }

  /// Draws R^2 = (Z - mu)^T Omega^{-1} (Z - mu) from its radial law.
  double sample_radius_squared(std::mt19937_64& rng) const;

  /// One draw mu + P * R * S with S uniform on the unit sphere.
  Eigen::VectorXd sample(const Eigen::VectorXd& mu,
                         const Eigen::MatrixXd& scale_chol,
                         std::mt19937_64& rng) const;

  std::string describe() const;

 private:
  EllipticalFamily(FamilyKind kind, double shape, int dim);

  FamilyKind kind_;
  double shape_;
  int dim_;
  double log_norm_;
  double c_;
};

}  // namespace eivlr
