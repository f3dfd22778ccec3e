#include "eivlr/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "eivlr/chol_diff.hpp"
#include "eivlr/error.hpp"
#include "eivlr/likelihood.hpp"

namespace eivlr {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string to_string(Statistic stat) {
  switch (stat) {
    case Statistic::lr:
      return "LR";
    case Statistic::lr_star:
      return "LR*";
    case Statistic::lr_dstar:
      return "LR**";
  }
  return "?";
}

Statistic statistic_from_string(const std::string& name) {
  if (name == "LR" || name == "lr") return Statistic::lr;
  if (name == "LR*" || name == "lr_star") return Statistic::lr_star;
  if (name == "LR**" || name == "lr_dstar") return Statistic::lr_dstar;
  throw InputError("bad_statistic", "unknown statistic '" + name + "'");
}

void SimConfig::validate() const {
  if (m < 1 || p < 1 || n < 1) throw InputError("bad_config", "m, p and n must be positive");
  if (replications < 1) throw InputError("bad_config", "reps must be >= 1");
  if (q < 1 || q > m * p) throw InputError("bad_config", "q must lie in [1, m*p]");
  for (double level : levels)
    if (!(level > 0.0 && level < 1.0)) throw InputError("bad_config", "levels must lie in (0, 1)");
  if (true_theta && true_theta->dims() != ModelDims{m, p})
    throw InputError("bad_config", "true_theta dims differ from (m, p)");
  (void)make_family();
}

EllipticalFamily SimConfig::make_family() const { return EllipticalFamily::make(family, shape, m + p); }

HypothesisSpec SimConfig::hypothesis() const {
  HypothesisSpec hyp;
  for (int k = 0; k < q; ++k) hyp.psi_indices.push_back(k);
  hyp.psi0 = VectorXd::Zero(q);
  return hyp;
}

ParameterVector SimConfig::truth(double eta) const {
  ParameterVector theta(ModelDims{m, p});
  if (true_theta) {
    theta = *true_theta;
  } else {
    theta.set_alpha(VectorXd::Constant(m, 0.2));
    theta.set_mu_x(VectorXd::Constant(p, -2.0));
    theta.set_sigma_q(10.0 * MatrixXd::Identity(m, m));
    theta.set_sigma_x(4.0 * MatrixXd::Identity(p, p));
  }
  for (int k = 0; k < q; ++k) theta[k] = eta;
  return theta;
}

std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x9e3779b9u};
  return std::mt19937_64(seq);
}

Design gen_design(const SimConfig& config) {
  auto rng = make_stream(config.seed, 0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Design design;
  for (int i = 0; i < config.n; ++i) {
    MatrixXd se = MatrixXd::Zero(config.m, config.m);
    for (int k = 0; k < config.m; ++k) {
      const double r = unif(rng);
      se(k, k) = r * r;
    }
    MatrixXd su = MatrixXd::Zero(config.p, config.p);
    for (int k = 0; k < config.p; ++k) {
      const double r = unif(rng);
      su(k, k) = r * r;
    }
    design.sigma_e.push_back(std::move(se));
    design.sigma_ue.push_back(MatrixXd::Zero(config.p, config.m));
    design.sigma_u.push_back(std::move(su));
  }
  return design;
}

namespace {

Dataset empty_dataset(const Design& design, const ModelDims& dims) {
  Dataset data;
  data.m = dims.m;
  data.p = dims.p;
  data.sigma_e = design.sigma_e;
  data.sigma_ue = design.sigma_ue;
  data.sigma_u = design.sigma_u;
  return data;
}

}  // namespace

Dataset draw_dataset(const Design& design, const ParameterVector& truth,
                     const EllipticalFamily& family, std::mt19937_64& rng) {
  Dataset data = empty_dataset(design, truth.dims());
  const VectorXd mu = mu_of(truth);
  for (std::size_t i = 0; i < design.sigma_e.size(); ++i) {
    // z is not read by omega_of
    const MatrixXd factor = chol(omega_of(truth, static_cast<int>(i), data, family));
    data.z.push_back(family.sample(mu, factor, rng));
  }
  return data;
}

std::vector<ReplicationOutcome> run_replications(const SimConfig& config, const Design& design,
                                                 const ParameterVector& truth) {
  const EllipticalFamily family = config.make_family();
  const HypothesisSpec hyp = config.hypothesis();
  std::vector<ReplicationOutcome> out(config.replications);

  std::atomic<int> next{0};
  const auto worker = [&] {
    for (int r = next++; r < config.replications; r = next++) {
      ReplicationOutcome& res = out[r];
      try {
        auto rng = make_stream(config.seed, static_cast<std::uint64_t>(r) + 1);
        const Dataset data = draw_dataset(design, truth, family, rng);
        const TestReport rep = lr_test(data, family, hyp);
        res.ok = true;
        res.lr = rep.lr;
        res.lr_star = rep.lr_star;
        res.lr_dstar = rep.lr_dstar;
        res.log_rho = rep.log_rho;
        res.rho_fallback = rep.flags.rho_nonpositive_determinant;
      } catch (const std::exception& e) {
        res.ok = false;
        res.error = e.what();
      }
    }
  };

  int threads = config.threads > 0 ? config.threads
                                   : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::clamp(threads, 1, config.replications);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  return out;
}

namespace {

double value_of(const ReplicationOutcome& o, Statistic stat) {
  switch (stat) {
    case Statistic::lr:
      return o.lr;
    case Statistic::lr_star:
      return o.lr_star;
    case Statistic::lr_dstar:
      return o.lr_dstar;
  }
  return 0.0;
}

void add_rates(SimReport& report, const std::vector<ReplicationOutcome>& outcomes,
               std::span<const Statistic> stats, double eta) {
  const int q = report.config.q;
  for (Statistic stat : stats) {
    for (double level : report.config.levels) {
      const double critical = chi2_quantile(1.0 - level, q);
      long valid = 0, rejections = 0;
      for (const auto& o : outcomes) {
        if (!o.ok) continue;
        ++valid;
        if (value_of(o, stat) > critical) ++rejections;
      }
      const double rate = valid > 0 ? static_cast<double>(rejections) / valid : 0.0;
      const double se = valid > 0 ? std::sqrt(rate * (1.0 - rate) / valid) : 0.0;
      report.rates.push_back({stat, level, eta, rejections, valid, rate, se});
    }
  }
}

void tally(SimReport& report, const std::vector<ReplicationOutcome>& outcomes) {
  for (const auto& o : outcomes) {
    ++report.replications;
    if (!o.ok) ++report.failures;
    if (o.ok && o.rho_fallback) ++report.rho_fallbacks;
  }
  report.unreliable = report.failures >= 0.02 * report.replications;
}

}  // namespace

const std::vector<double>& SimReport::sorted(Statistic stat) const {
  switch (stat) {
    case Statistic::lr:
      return sorted_lr;
    case Statistic::lr_star:
      return sorted_lr_star;
    case Statistic::lr_dstar:
      return sorted_lr_dstar;
  }
  return sorted_lr;
}

const RateEntry& SimReport::rate(Statistic stat, double level, double eta) const {
  for (const auto& r : rates)
    if (r.statistic == stat && std::abs(r.level - level) < 1e-12 && std::abs(r.eta - eta) < 1e-12)
      return r;
  throw InputError("missing_rate", "no rate for " + to_string(stat) + " at level " +
                                       std::to_string(level) + ", eta " + std::to_string(eta));
}

SimReport run_null_study(const SimConfig& config) {
  config.validate();
  SimReport report;
  report.config = config;
  const Design design = gen_design(config);
  const auto outcomes = run_replications(config, design, config.truth(0.0));
  tally(report, outcomes);

  constexpr Statistic all[] = {Statistic::lr, Statistic::lr_star, Statistic::lr_dstar};
  add_rates(report, outcomes, all, 0.0);
  for (const auto& o : outcomes) {
    if (!o.ok) continue;
    report.sorted_lr.push_back(o.lr);
    report.sorted_lr_star.push_back(o.lr_star);
    report.sorted_lr_dstar.push_back(o.lr_dstar);
    report.log_rho.push_back(o.log_rho);
  }
  std::sort(report.sorted_lr.begin(), report.sorted_lr.end());
  std::sort(report.sorted_lr_star.begin(), report.sorted_lr_star.end());
  std::sort(report.sorted_lr_dstar.begin(), report.sorted_lr_dstar.end());
  return report;
}

SimReport run_power_study(const SimConfig& config) {
  config.validate();
  if (config.power_grid.empty()) throw InputError("bad_config", "power study needs power_grid");
  SimReport report;
  report.config = config;
  const Design design = gen_design(config);
  constexpr Statistic adjusted[] = {Statistic::lr_star, Statistic::lr_dstar};
  for (double eta : config.power_grid) {
    const auto outcomes = run_replications(config, design, config.truth(eta));
    tally(report, outcomes);
    add_rates(report, outcomes, adjusted, eta);
  }
  return report;
}

std::vector<std::pair<double, double>> discrepancy_curve(std::span<const double> sorted_values,
                                                         int q) {
  if (sorted_values.empty()) throw InputError("empty_input", "discrepancy curve needs values");
  if (q < 1) throw InputError("bad_q", "q must be positive");
  const auto count = static_cast<double>(sorted_values.size());
  std::vector<std::pair<double, double>> curve;
  curve.reserve(sorted_values.size());
  for (std::size_t k = 0; k < sorted_values.size(); ++k) {
    const double quant = chi2_quantile((static_cast<double>(k) + 1.0) / (count + 1.0), q);
    curve.emplace_back(quant, (sorted_values[k] - quant) / quant);
  }
  return curve;
}

}  // namespace eivlr
