#include "eivlr/elliptical.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "eivlr/error.hpp"

namespace eivlr {

std::string to_string(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::normal:
      return "normal";
    case FamilyKind::student_t:
      return "student_t";
    case FamilyKind::power_exponential:
      return "power_exponential";
  }
  return "unknown";
}

FamilyKind family_kind_from_string(const std::string& name) {
  if (name == "normal") return FamilyKind::normal;
  if (name == "student_t" || name == "t") return FamilyKind::student_t;
  if (name == "power_exponential" || name == "pe") return FamilyKind::power_exponential;
  throw InputError("bad_family", "unknown family '" + name + "'");
}

EllipticalFamily::EllipticalFamily(FamilyKind kind, double shape, int dim)
    : kind_(kind), shape_(shape), dim_(dim), log_norm_(0.0), c_(1.0) {
  if (dim < 1) throw DomainError("family dimension must be positive");
  const double q = dim;
  switch (kind) {
    case FamilyKind::normal:
      shape_ = 0.0;
      log_norm_ = -0.5 * q * std::log(2.0 * std::numbers::pi);
      c_ = 1.0;
      break;
    case FamilyKind::student_t: {
      const double nu = shape;
      if (!(nu > 2.0) || !std::isfinite(nu))
        throw DomainError("student_t requires nu > 2 (finite variance)");
      log_norm_ = std::lgamma(0.5 * (nu + q)) - std::lgamma(0.5 * nu) -
                  0.5 * q * std::log(nu * std::numbers::pi);
      c_ = nu / (nu - 2.0);
      break;
    }
    case FamilyKind::power_exponential: {
      const double lambda = shape;
      if (!(lambda > 0.0 && lambda <= 1.0))
        throw DomainError("power_exponential requires 0 < lambda <= 1");
      const double k = q / (2.0 * lambda);
      log_norm_ = std::log(q) + std::lgamma(0.5 * q) -
                  0.5 * q * std::log(std::numbers::pi) - std::lgamma(1.0 + k) -
                  (1.0 + k) * std::numbers::ln2;
      // E[R^2] / q with u^lambda / 2 ~ Gamma(k, 1)
      c_ = std::exp(std::numbers::ln2 / lambda + std::lgamma(k + 1.0 / lambda) -
                    std::lgamma(k)) /
           q;
      break;
    }
  }
}

EllipticalFamily EllipticalFamily::normal(int dim) {
  return EllipticalFamily(FamilyKind::normal, 0.0, dim);
}

EllipticalFamily EllipticalFamily::student_t(double nu, int dim) {
  return EllipticalFamily(FamilyKind::student_t, nu, dim);
}

EllipticalFamily EllipticalFamily::power_exponential(double lambda, int dim) {
  return EllipticalFamily(FamilyKind::power_exponential, lambda, dim);
}

EllipticalFamily EllipticalFamily::make(FamilyKind kind, double shape, int dim) {
  return EllipticalFamily(kind, shape, dim);
}

namespace {

void check_u(double u) {
  if (!(u >= 0.0)) throw DomainError("density generator argument must be >= 0");
}

}  // namespace

double EllipticalFamily::log_p0(double u) const {
  check_u(u);
  switch (kind_) {
    case FamilyKind::normal:
      return log_norm_ - 0.5 * u;
    case FamilyKind::student_t:
      return log_norm_ - 0.5 * (shape_ + dim_) * std::log1p(u / shape_);
    case FamilyKind::power_exponential:
      return log_norm_ - 0.5 * std::pow(u, shape_);
  }
  return 0.0;
}

double EllipticalFamily::W(double u) const {
  check_u(u);
  switch (kind_) {
    case FamilyKind::normal:
      return -0.5;
    case FamilyKind::student_t:
      return -0.5 * (shape_ + dim_) / (shape_ + u);
    case FamilyKind::power_exponential:
      if (shape_ == 1.0) return -0.5;
      if (u == 0.0) return -std::numeric_limits<double>::infinity();
      return -0.5 * shape_ * std::pow(u, shape_ - 1.0);
  }
  return 0.0;
}

double EllipticalFamily::W_prime(double u) const {
  check_u(u);
  switch (kind_) {
    case FamilyKind::normal:
      return 0.0;
    case FamilyKind::student_t: {
      const double t = shape_ + u;
      return 0.5 * (shape_ + dim_) / (t * t);
    }
    case FamilyKind::power_exponential:
      if (shape_ == 1.0) return 0.0;
      if (u == 0.0) return std::numeric_limits<double>::infinity();
      return 0.5 * shape_ * (1.0 - shape_) * std::pow(u, shape_ - 2.0);
  }
  return 0.0;
}

double EllipticalFamily::sample_radius_squared(std::mt19937_64& rng) const {
  const double q = dim_;
  switch (kind_) {
    case FamilyKind::normal:
      return std::chi_squared_distribution<double>(q)(rng);
    case FamilyKind::student_t: {
      const double num = std::chi_squared_distribution<double>(q)(rng);
      const double den = std::chi_squared_distribution<double>(shape_)(rng);
      return shape_ * num / den;
    }
    case FamilyKind::power_exponential: {
      const double t = std::gamma_distribution<double>(q / (2.0 * shape_), 1.0)(rng);
      return std::pow(2.0 * t, 1.0 / shape_);
    }
  }
  return 0.0;
}

Eigen::VectorXd EllipticalFamily::sample(const Eigen::VectorXd& mu,
                                         const Eigen::MatrixXd& scale_chol,
                                         std::mt19937_64& rng) const {
  if (mu.size() != dim_ || scale_chol.rows() != dim_ || scale_chol.cols() != dim_)
    throw DomainError("sample: dimension mismatch with family");
  if (!mu.allFinite() || !scale_chol.allFinite())
    throw DomainError("sample: non-finite location or scale");
  for (int k = 0; k < dim_; ++k)
    if (!(scale_chol(k, k) > 0.0))
      throw DomainError("sample: scale factor needs a positive diagonal");

  std::normal_distribution<double> gauss;
  Eigen::VectorXd g(dim_);
  for (int k = 0; k < dim_; ++k) g(k) = gauss(rng);

  Eigen::VectorXd direction;
  switch (kind_) {
    case FamilyKind::normal:
      direction = g;
      break;
    case FamilyKind::student_t: {
      const double w = std::chi_squared_distribution<double>(shape_)(rng);
      direction = g * std::sqrt(shape_ / w);
      break;
    }
    case FamilyKind::power_exponential: {
      const double r = std::sqrt(sample_radius_squared(rng));
      direction = g * (r / g.norm());
      break;
    }
  }
  return mu + scale_chol.triangularView<Eigen::Lower>() * direction;
}

std::string EllipticalFamily::describe() const {
  std::ostringstream os;
  os << to_string(kind_);
  if (kind_ == FamilyKind::student_t) os << "(nu=" << shape_ << ")";
  if (kind_ == FamilyKind::power_exponential) os << "(lambda=" << shape_ << ")";
  os << " q=" << dim_;
  return os.str();
}

}  // namespace eivlr
