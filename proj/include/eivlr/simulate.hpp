#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "eivlr/elliptical.hpp"
#include "eivlr/model.hpp"
#include "eivlr/skovgaard.hpp"

namespace eivlr {

enum class Statistic { lr, lr_star, lr_dstar };

std::string to_string(Statistic stat);
Statistic statistic_from_string(const std::string& name);

/// Monte Carlo study setup. Defaults give the reference design:
/// m = 1, alpha = 0.2, mu_x = (-2, ..., -2), Sigma_q = 10, Sigma_x = 4 I_p,
/// beta = 0 except psi = (beta_1, ..., beta_q) which is 0 under the null and
/// (eta, ..., eta) along the power grid.
struct SimConfig {
  FamilyKind family = FamilyKind::normal;
  double shape = 0.0;  // nu or lambda
  int m = 1;
  int p = 2;
  int q = 2;
  int n = 20;
  int replications = 2000;
  std::uint64_t seed = 20130101;
  std::optional<ParameterVector> true_theta;
  std::vector<double> levels{0.01, 0.05, 0.10};
  std::vector<double> power_grid;
  /// 0 = hardware concurrency
  int threads = 0;

  void validate() const;
  EllipticalFamily make_family() const;
  /// psi = first q entries of vec(beta), tested against 0.
  HypothesisSpec hypothesis() const;
  /// true_theta, or the reference design with psi = (eta, ..., eta).
  ParameterVector truth(double eta = 0.0) const;
};

/// Known per-observation error scales, drawn once and shared by every
/// replication: Sigma_ue = 0, sqrt(Sigma_e) ~ U(0,1) (diagonal when m > 1),
/// Sigma_u diagonal with sqrt entries ~ U(0,1).
struct Design {
  std::vector<Eigen::MatrixXd> sigma_e;
  std::vector<Eigen::MatrixXd> sigma_ue;
  std::vector<Eigen::MatrixXd> sigma_u;
};

Design gen_design(const SimConfig& config);

/// Independent stream for (seed, stream id); stream 0 is the design.
std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream);

/// One simulated dataset with the given design at `truth`.
Dataset draw_dataset(const Design& design, const ParameterVector& truth,
                     const EllipticalFamily& family, std::mt19937_64& rng);

struct ReplicationOutcome {
  bool ok = false;
  double lr = 0.0;
  double lr_star = 0.0;
  double lr_dstar = 0.0;
  double log_rho = 0.0;
  bool rho_fallback = false;
  std::string error;
};

struct RateEntry {
  Statistic statistic;
  double level;
  double eta;
  long rejections;
  long valid;
  double rate;
  double se;  // sqrt(rate (1 - rate) / valid)
};

struct SimReport {
  SimConfig config;
  std::vector<RateEntry> rates;
  /// Null studies only: sorted statistic values over successful replications.
  std::vector<double> sorted_lr;
  std::vector<double> sorted_lr_star;
  std::vector<double> sorted_lr_dstar;
  std::vector<double> log_rho;
  long replications = 0;
  long failures = 0;
  long rho_fallbacks = 0;
  /// failure rate >= 2%
  bool unreliable = false;

  const std::vector<double>& sorted(Statistic stat) const;
  /// Rate for (statistic, level, eta); throws if absent.
  const RateEntry& rate(Statistic stat, double level, double eta = 0.0) const;
};

/// Runs all replications of a study at a single truth. Replication r uses
/// stream r + 1, so results do not depend on the thread count.
std::vector<ReplicationOutcome> run_replications(const SimConfig& config, const Design& design,
                                                 const ParameterVector& truth);

/// Size study: data generated under H0, rates for LR, LR*_a, LR**_a.
SimReport run_null_study(const SimConfig& config);

/// Power study over config.power_grid (eta = 0 gives the null): rates for
/// LR*_a and LR**_a only. Replication streams are shared across eta.
SimReport run_power_study(const SimConfig& config);

/// (chi^2_q quantile at k/(N+1), relative discrepancy of the k-th order
/// statistic) for k = 1..N. `sorted_values` must be ascending.
std::vector<std::pair<double, double>> discrepancy_curve(std::span<const double> sorted_values,
                                                         int q);

}  // namespace eivlr
