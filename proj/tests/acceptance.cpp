// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "eivlr/chol_diff.hpp"
#include "eivlr/cli.hpp"
#include "eivlr/error.hpp"
#include "eivlr/io.hpp"
#include "eivlr/likelihood.hpp"
#include "eivlr/simulate.hpp"
#include "eivlr/skovgaard.hpp"
#include "oracles.hpp"

using namespace eivlr;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Verdict {
  bool pass;
  std::string detail;
};

std::string fmt(double x, int precision = 3) {
  std::ostringstream ss;
  ss.precision(precision);
  ss << x;
  return ss.str();
}

SimConfig study(FamilyKind kind, double shape, int p, int q, int n, int reps) {
  SimConfig cfg;
  cfg.family = kind;
  cfg.shape = shape;
  cfg.p = p;
  cfg.q = q;
  cfg.n = n;
  cfg.replications = reps;
  return cfg;
}

double rejection_percent(const std::vector<ReplicationOutcome>& outcomes, Statistic stat,
                         double level, int q) {
  const double critical = chi2_quantile(1.0 - level, q);
  long valid = 0, rejected = 0;
  for (const auto& o : outcomes) {
    if (!o.ok) continue;
    ++valid;
    const double v = stat == Statistic::lr ? o.lr : stat == Statistic::lr_star ? o.lr_star : o.lr_dstar;
    if (v > critical) ++rejected;
  }
  return valid ? 100.0 * rejected / valid : std::numeric_limits<double>::quiet_NaN();
}

long failures(const std::vector<ReplicationOutcome>& outcomes) {
  return std::count_if(outcomes.begin(), outcomes.end(), [](const auto& o) { return !o.ok; });
}

bool within(double value, double centre, double half) { return std::abs(value - centre) <= half; }

// Every completed replication feeds the invariant checks.
struct InvariantLog {
  long checked = 0;
  long violations = 0;
  double worst_gap = 0.0;  // max of |LR* - LR**| - (log rho)^2 / LR
  long translated = 0;
  double worst_shift = 0.0;

  void record(const ReplicationOutcome& o) {
    if (!o.ok) return;
    ++checked;
    bool ok = o.lr >= 0.0 && o.lr_star >= 0.0;
    if (std::isfinite(o.log_rho) && o.lr > 0.0) {
      const double gap = std::abs(o.lr_star - o.lr_dstar) - o.log_rho * o.log_rho / o.lr;
      worst_gap = std::max(worst_gap, gap);
      ok = ok && gap <= 1e-9 * std::max(1.0, o.lr);
    } else {
      ok = ok && o.lr_star == o.lr_dstar;
    }
    if (!ok) ++violations;
  }
};

InvariantLog invariants;

// Re-runs the test after shifting every observation; LR, log rho and LR**
// must not move.
void check_translation(const SimConfig& cfg, int count) {
  const auto design = gen_design(cfg);
  const auto family = cfg.make_family();
  const auto hyp = cfg.hypothesis();
  std::mt19937_64 shift_rng(cfg.seed ^ 0x5eedULL);
  std::uniform_real_distribution<double> unif(-20.0, 20.0);
  for (int r = 0; r < count; ++r) {
    auto rng = make_stream(cfg.seed, static_cast<std::uint64_t>(r) + 1);
    const Dataset data = draw_dataset(design, cfg.truth(), family, rng);
    VectorXd shift(cfg.m + cfg.p);
    for (auto& v : shift) v = unif(shift_rng);
    Dataset moved = data;
    for (auto& z : moved.z) z += shift;
    try {
      const auto a = lr_test(data, family, hyp);
      const auto b = lr_test(moved, family, hyp);
      ++invariants.translated;
      double d = std::max(std::abs(a.lr - b.lr), std::abs(a.lr_dstar - b.lr_dstar));
      if (std::isfinite(a.log_rho) || std::isfinite(b.log_rho))
        d = std::max(d, std::abs(a.log_rho - b.log_rho));
      if (!std::isfinite(d)) d = std::numeric_limits<double>::infinity();
      invariants.worst_shift = std::max(invariants.worst_shift, d);
    } catch (const std::exception&) {
      // A fit failure on the original data is a size-study failure, not an
      // invariance violation.
    }
  }
}

std::vector<ReplicationOutcome> replications(const SimConfig& cfg) {
  const auto out = run_replications(cfg, gen_design(cfg), cfg.truth());
  for (const auto& o : out) invariants.record(o);
  return out;
}

// ------------------------------------------------------------------ 1

Verdict derivatives() {
  std::mt19937_64 rng(101);
  double score_err = 0, info_err = 0, lp_err = 0, up_err = 0, chol_err = 0;
  int points = 0;
  for (int fam_id = 0; fam_id < 3; ++fam_id)
    for (int m = 1; m <= 2; ++m)
      for (int p = 1; p <= 2; ++p)
        for (int k = 0; k < 20; ++k) {
          const int dim = m + p;
          const auto family = fam_id == 0   ? EllipticalFamily::normal(dim)
                              : fam_id == 1 ? EllipticalFamily::student_t(5, dim)
                                            : EllipticalFamily::power_exponential(0.6, dim);
          const auto data = oracle::random_dataset(m, p, 10, rng);
          const auto theta = oracle::random_theta(m, p, rng);
          const auto frame = oracle::random_theta(m, p, rng);
          const ModelDims dims = theta.dims();
          ++points;

          const auto ev = evaluate(theta, data, family, Order::hessian);
          score_err = std::max(
              score_err,
              oracle::rel_err(ev.score, oracle::fd_gradient(
                                            [&](const VectorXd& v) {
                                              return loglik(ParameterVector(dims, v), data, family);
                                            },
                                            theta.values())));
          info_err = std::max(
              info_err,
              oracle::rel_err(ev.info, -oracle::fd_jacobian(
                                           [&](const VectorXd& v) {
                                             return score(ParameterVector(dims, v), data, family);
                                           },
                                           theta.values())));

          const auto anc = ancillary(frame, data, family);
          const auto ssd = sample_space_derivs(theta, anc, data, family, false);
          const auto rebuilt = [&](const VectorXd& f) {
            return oracle::rebuild(data, ParameterVector(dims, f), anc.a, family);
          };
          lp_err = std::max(lp_err, oracle::rel_err(ssd.ell_prime,
                                                    oracle::fd_gradient(
                                                        [&](const VectorXd& f) {
                                                          return loglik(theta, rebuilt(f), family);
                                                        },
                                                        frame.values())));
          up_err = std::max(up_err, oracle::rel_err(ssd.u_prime,
                                                    oracle::fd_jacobian(
                                                        [&](const VectorXd& f) {
                                                          return score(theta, rebuilt(f), family);
                                                        },
                                                        frame.values())));

          // dP_i / dtheta_j of the frame against differences of chol(Omega_i).
          for (int i = 0; i < data.n(); i += 3)
            for (int j = 0; j < dims.s(); ++j) {
              const double h = 1e-5 * std::max(1.0, std::abs(frame[j]));
              auto up = frame, dn = frame;
              up[j] += h;
              dn[j] -= h;
              const MatrixXd fd =
                  (chol(omega_of(up, i, data, family)) - chol(omega_of(dn, i, data, family))) /
                  (2 * h);
              const double scale = std::max(anc.frame.chol[i].cwiseAbs().maxCoeff(), 1e-12);
              chol_err = std::max(chol_err,
                                  (anc.frame.dchol[i][j] - fd).cwiseAbs().maxCoeff() / scale);
            }
        }
  const bool pass = score_err < 1e-6 && info_err < 1e-5 && lp_err < 1e-4 && up_err < 1e-4 &&
                    chol_err < 1e-7;
  return {pass, std::to_string(points) + " points; max rel err score " + fmt(score_err) +
                    ", info " + fmt(info_err) + ", l' " + fmt(lp_err) + ", U' " + fmt(up_err) +
                    ", chol " + fmt(chol_err)};
}

// ------------------------------------------------------------------ 2

Verdict block_oracle() {
  auto cfg = study(FamilyKind::student_t, 5.0, 1, 1, 10, 1);
  cfg.seed = 202;
  const auto design = gen_design(cfg);
  const auto family = cfg.make_family();
  const auto hyp = cfg.hypothesis();
  int done = 0;
  double worst = 0.0;
  for (std::uint64_t r = 1; done < 10 && r <= 200; ++r) {
    auto rng = make_stream(cfg.seed, r);
    const Dataset data = draw_dataset(design, cfg.truth(0.3), family, rng);
    TestReport rep;
    try {
      rep = lr_test(data, family, hyp);
    } catch (const std::exception&) {
      continue;
    }
    if (!std::isfinite(rep.log_rho) || rep.flags.lr_near_zero) continue;
    const double ref = oracle::block_log_rho(rep.fit_hat, rep.fit_tilde, data, family, hyp);
    const double err = std::abs(rep.log_rho - ref) / std::max(1.0, std::abs(ref));
    worst = std::max(worst, std::isfinite(err) ? err : std::numeric_limits<double>::infinity());
    ++done;
  }
  return {done == 10 && worst < 1e-9,
          std::to_string(done) + " instances; max rel diff " + fmt(worst)};
}

// ------------------------------------------------------------------ 3 to 6

Verdict table_normal() {
  const auto cfg = study(FamilyKind::normal, 0.0, 2, 2, 20, 2000);
  const auto out = replications(cfg);
  check_translation(cfg, 25);
  const double lr = rejection_percent(out, Statistic::lr, 0.05, 2);
  const double dstar = rejection_percent(out, Statistic::lr_dstar, 0.05, 2);
  return {within(lr, 8.2, 1.9) && within(dstar, 5.2, 1.5),
          "LR " + fmt(lr) + "% (8.2 +- 1.9), LR** " + fmt(dstar) + "% (5.2 +- 1.5), LR* " +
              fmt(rejection_percent(out, Statistic::lr_star, 0.05, 2)) + "%, failures " +
              std::to_string(failures(out))};
}

Verdict table_t5() {
  const auto cfg = study(FamilyKind::student_t, 5.0, 3, 2, 20, 2000);
  const auto out = replications(cfg);
  check_translation(cfg, 25);
  const double lr = rejection_percent(out, Statistic::lr, 0.01, 2);
  const double dstar = rejection_percent(out, Statistic::lr_dstar, 0.01, 2);
  return {within(lr, 2.5, 1.1) && within(dstar, 1.1, 0.7),
          "LR " + fmt(lr) + "% (2.5 +- 1.1), LR** " + fmt(dstar) + "% (1.1 +- 0.7), failures " +
              std::to_string(failures(out))};
}

Verdict power() {
  const auto cfg = study(FamilyKind::normal, 0.0, 2, 2, 20, 2000);
  const auto out = run_replications(cfg, gen_design(cfg), cfg.truth(1.0));
  for (const auto& o : out) invariants.record(o);
  const double star = rejection_percent(out, Statistic::lr_star, 0.05, 2);
  return {within(star, 72.8, 3.0), "LR* power " + fmt(star) + "% (72.8 +- 3.0), LR** " +
                                       fmt(rejection_percent(out, Statistic::lr_dstar, 0.05, 2)) +
                                       "%, failures " + std::to_string(failures(out))};
}

Verdict ks_large_n() {
  const auto cfg = study(FamilyKind::normal, 0.0, 2, 2, 200, 1000);
  const auto out = replications(cfg);
  check_translation(cfg, 10);
  std::vector<double> v;
  for (const auto& o : out)
    if (o.ok) v.push_back(o.lr_dstar);
  std::sort(v.begin(), v.end());
  // chi^2_2 cdf is 1 - exp(-x / 2)
  double ks = 0.0;
  const double n = static_cast<double>(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) {
    const double f = v[k] > 0 ? 1.0 - std::exp(-v[k] / 2.0) : 0.0;
    ks = std::max({ks, std::abs(f - k / n), std::abs(f - (k + 1) / n)});
  }
  return {ks < 0.06 && !v.empty(),
          "KS " + fmt(ks) + " over " + std::to_string(v.size()) + " values (< 0.06)"};
}

// ------------------------------------------------------------------ 7

Verdict invariant_summary() {
  // Run on its own, it needs replications of its own.
  if (invariants.checked == 0) {
    const auto cfg = study(FamilyKind::normal, 0.0, 2, 2, 20, 300);
    replications(cfg);
    check_translation(cfg, 25);
  }
  // One more family so the translation check covers heavy tails.
  check_translation(study(FamilyKind::power_exponential, 0.6, 2, 1, 20, 1), 10);
  const bool pass = invariants.checked > 0 && invariants.violations == 0 &&
                    invariants.translated > 0 && invariants.worst_shift <= 1e-6;
  return {pass, std::to_string(invariants.checked) + " replications, " +
                    std::to_string(invariants.violations) + " sign/identity violations (worst gap " +
                    fmt(invariants.worst_gap) + "); " + std::to_string(invariants.translated) +
                    " translated refits, max shift " + fmt(invariants.worst_shift)};
}

// ------------------------------------------------------------------ 8

double feasible_loglik(const VectorXd& v, const Dataset& data, const EllipticalFamily& family) {
  const ParameterVector theta(data.dims(), v);
  if (!(theta.sigma_q()(0, 0) > 0.0) || !(theta.sigma_x()(0, 0) > 0.0))
    return -std::numeric_limits<double>::infinity();
  try {
    return loglik(theta, data, family);
  } catch (const NotPositiveDefinite&) {
    return -std::numeric_limits<double>::infinity();
  }
}

VectorXd json_vector(const nlohmann::json& j) {
  VectorXd v(j.size());
  for (std::size_t k = 0; k < j.size(); ++k) v(k) = j[k].get<double>();
  return v;
}

Verdict grid_search() {
  auto cfg = study(FamilyKind::normal, 0.0, 1, 1, 60, 1);
  cfg.seed = 808;
  const auto family = cfg.make_family();
  auto rng = make_stream(cfg.seed, 1);
  const Dataset data = draw_dataset(gen_design(cfg), cfg.truth(1.0), family, rng);

  const auto dir = std::filesystem::temp_directory_path() /
                   ("eivlr_accept_" + std::to_string(std::random_device{}()));
  std::filesystem::create_directories(dir);
  write_dataset(dir / "synthetic.csv", data);
  const std::string data_arg = (dir / "synthetic.csv").string();
  const std::string out_arg = (dir / "report.json").string();
  const char* argv[] = {"eivlr", "test", "--data", data_arg.c_str(), "--beta", "0=1",
                        "--out", out_arg.c_str()};
  std::ostringstream sink, err;
  const int code = run_cli(8, argv, sink, err);
  if (code != kExitOk) {
    std::filesystem::remove_all(dir);
    return {false, "cli exited " + std::to_string(code) + ": " + err.str()};
  }
  std::ifstream in(dir / "report.json");
  const auto report = nlohmann::json::parse(in);
  std::filesystem::remove_all(dir);

  const VectorXd hat = json_vector(report["fit_hat"]["theta"]["theta"]);
  const VectorXd tilde = json_vector(report["fit_tilde"]["theta"]["theta"]);

  // Unconstrained: all five coordinates, started from the moment estimate.
  const VectorXd start = initial_estimate(data).values();
  const VectorXd width = (2.0 * start.cwiseAbs()).cwiseMax(2.0);
  const auto full = oracle::zoom_grid_maximize(
      [&](const VectorXd& v) { return feasible_loglik(v, data, family); }, start, width);

  // Constrained: beta fixed at 1, search the other four.
  const auto pinned = [&](const VectorXd& w) {
    VectorXd v(5);
    v << 1.0, w;
    return v;
  };
  const auto con = oracle::zoom_grid_maximize(
      [&](const VectorXd& w) { return feasible_loglik(pinned(w), data, family); }, start.tail(4),
      width.tail(4));

  const double d_hat = (full.argmax - hat).cwiseAbs().maxCoeff();
  const double d_tilde = (pinned(con.argmax) - tilde).cwiseAbs().maxCoeff();
  const double dl_hat = std::abs(full.value - report["fit_hat"]["loglik"].get<double>());
  const double dl_tilde = std::abs(con.value - report["fit_tilde"]["loglik"].get<double>());
  const bool pass = d_hat < 1e-3 && d_tilde < 1e-3 && dl_hat < 1e-3 && dl_tilde < 1e-3 &&
                    tilde(0) == 1.0;
  return {pass, "max |theta diff| unconstrained " + fmt(d_hat) + ", constrained " + fmt(d_tilde) +
                    "; loglik diffs " + fmt(dl_hat) + ", " + fmt(dl_tilde) + "; " +
                    std::to_string(full.evaluations + con.evaluations) + " grid evaluations"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria 1 to 8"};
  std::vector<int> only;
  app.add_option("criteria", only, "subset of criteria to run (default all)")
      ->check(CLI::Range(1, 8));
  CLI11_PARSE(app, argc, argv);
  const std::set<int> selected =
      only.empty() ? std::set<int>{1, 2, 3, 4, 5, 6, 7, 8} : std::set<int>(only.begin(), only.end());

  struct Criterion {
    int id;
    const char* name;
    Verdict (*run)();
  };
  const Criterion all[] = {{1, "derivatives", derivatives},
                           {2, "block oracle", block_oracle},
                           {3, "normal size, p = q = 2", table_normal},
                           {4, "t5 size, p = 3, q = 2", table_t5},
                           {5, "power at eta = 1", power},
                           {6, "KS at n = 200", ks_large_n},
                           {7, "invariants", invariant_summary},
                           {8, "grid search through the CLI", grid_search}};

  int failed = 0;
  for (const auto& c : all) {
    if (!selected.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "criterion " << c.id << " (" << c.name << "): " << (v.pass ? "PASS" : "FAIL")
              << "  " << v.detail << "  [" << fmt(secs, 3) << " s]" << std::endl;
    if (!v.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
