#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "eivlr/error.hpp"
#include "eivlr/simulate.hpp"

using namespace eivlr;

namespace {

SimConfig tiny(int reps = 40) {
  SimConfig cfg;
  cfg.n = 15;
  cfg.replications = reps;
  cfg.threads = 1;
  cfg.seed = 99;
  return cfg;
}

}  // namespace

TEST_CASE("reference design defaults") {
  const SimConfig cfg;
  const auto theta = cfg.truth();
  CHECK(theta.alpha()(0) == 0.2);
  CHECK(theta.mu_x() == Eigen::VectorXd::Constant(2, -2.0));
  CHECK(theta.sigma_q()(0, 0) == 10.0);
  CHECK(theta.sigma_x() == 4.0 * Eigen::MatrixXd::Identity(2, 2));
  CHECK(theta.beta().cwiseAbs().maxCoeff() == 0.0);
  const auto alt = cfg.truth(0.7);
  CHECK(alt[0] == 0.7);
  CHECK(alt[1] == 0.7);
  const auto hyp = cfg.hypothesis();
  CHECK(hyp.psi_indices == std::vector<int>{0, 1});
  CHECK(hyp.psi0.isZero());
}

TEST_CASE("config validation") {
  auto cfg = tiny();
  cfg.q = 3;
  CHECK_THROWS_AS(cfg.validate(), InputError);
  cfg = tiny();
  cfg.levels = {0.05, 1.0};
  CHECK_THROWS_AS(cfg.validate(), InputError);
  cfg = tiny();
  cfg.family = FamilyKind::student_t;
  cfg.shape = 1.0;
  CHECK_THROWS_AS(cfg.validate(), DomainError);
  cfg = tiny();
  CHECK_THROWS_AS(run_power_study(cfg), InputError);
}

TEST_CASE("design is deterministic and in range") {
  auto cfg = tiny();
  cfg.n = 100000;
  const auto a = gen_design(cfg);
  const auto b = gen_design(cfg);
  REQUIRE(a.sigma_e.size() == 100000);
  double mean = 0.0;
  for (std::size_t i = 0; i < a.sigma_e.size(); ++i) {
    CHECK(a.sigma_e[i] == b.sigma_e[i]);
    CHECK(a.sigma_u[i] == b.sigma_u[i]);
    const double e = a.sigma_e[i](0, 0);
    if (!(e >= 0.0 && e <= 1.0)) FAIL("sigma_e outside [0, 1]");
    if (a.sigma_u[i](0, 1) != 0.0) FAIL("sigma_u not diagonal");
    if (!a.sigma_ue[i].isZero()) FAIL("sigma_ue not zero");
    mean += e;
  }
  mean /= 100000;
  // E[U^2] = 1/3 with sd sqrt(4/45)
  CHECK(std::abs(mean - 1.0 / 3.0) < 4 * std::sqrt(4.0 / 45.0 / 100000));
}

TEST_CASE("streams are independent of each other and reproducible") {
  auto a = make_stream(7, 1), b = make_stream(7, 1), c = make_stream(7, 2), d = make_stream(8, 1);
  const auto x = a();
  CHECK(x == b());
  CHECK(x != c());
  CHECK(x != d());
}

TEST_CASE("results do not depend on the thread count") {
  auto cfg = tiny(12);
  const auto one = run_null_study(cfg);
  cfg.threads = 3;
  const auto three = run_null_study(cfg);
  CHECK(one.sorted_lr == three.sorted_lr);
  CHECK(one.sorted_lr_dstar == three.sorted_lr_dstar);
  CHECK(one.failures == three.failures);
  CHECK(one.replications == 12);
}

TEST_CASE("power at eta = 0 reproduces the null rates") {
  auto cfg = tiny(30);
  const auto null = run_null_study(cfg);
  cfg.power_grid = {0.0, 0.8};
  const auto power = run_power_study(cfg);
  for (double level : cfg.levels)
    for (auto stat : {Statistic::lr_star, Statistic::lr_dstar}) {
      CHECK(power.rate(stat, level, 0.0).rejections == null.rate(stat, level).rejections);
      CHECK(power.rate(stat, level, 0.8).rate >= power.rate(stat, level, 0.0).rate);
    }
  CHECK_THROWS_AS(power.rate(Statistic::lr, 0.05, 0.0), InputError);
}

TEST_CASE("rate bookkeeping") {
  const auto rep = run_null_study(tiny(30));
  for (const auto& r : rep.rates) {
    CHECK(r.valid == rep.replications - rep.failures);
    CHECK(r.rate == doctest::Approx(double(r.rejections) / r.valid));
    CHECK(r.se == doctest::Approx(std::sqrt(r.rate * (1 - r.rate) / r.valid)));
  }
  // Nested levels give nested rejection counts.
  CHECK(rep.rate(Statistic::lr, 0.01).rejections <= rep.rate(Statistic::lr, 0.05).rejections);
  CHECK(rep.rate(Statistic::lr, 0.05).rejections <= rep.rate(Statistic::lr, 0.10).rejections);
  CHECK(std::is_sorted(rep.sorted_lr.begin(), rep.sorted_lr.end()));
}

TEST_CASE("discrepancy curve") {
  const std::vector<double> vals{0.5, 1.0, 2.0};
  const auto curve = discrepancy_curve(vals, 2);
  REQUIRE(curve.size() == 3);
  // chi^2_2 quantile at k/4 is -2 log(1 - k/4)
  for (int k = 0; k < 3; ++k) {
    const double quant = -2.0 * std::log(1.0 - (k + 1) / 4.0);
    CHECK(curve[k].first == doctest::Approx(quant).epsilon(1e-12));
    CHECK(curve[k].second == doctest::Approx((vals[k] - quant) / quant).epsilon(1e-12));
  }
  for (std::size_t k = 1; k < curve.size(); ++k) CHECK(curve[k].first > curve[k - 1].first);

  // Exact chi^2 quantiles give a flat zero curve.
  std::vector<double> exact;
  for (int k = 1; k <= 9; ++k) exact.push_back(-2.0 * std::log(1.0 - k / 10.0));
  for (const auto& [x, d] : discrepancy_curve(exact, 2)) CHECK(std::abs(d) < 1e-12);

  CHECK_THROWS_AS(discrepancy_curve({}, 2), InputError);
  CHECK_THROWS_AS(discrepancy_curve(vals, 0), InputError);
}

TEST_CASE("the adjusted statistic is smaller than LR in the upper tail") {
  auto cfg = tiny(200);
  const auto rep = run_null_study(cfg);
  const auto lr = discrepancy_curve(rep.sorted(Statistic::lr), cfg.q);
  const auto ad = discrepancy_curve(rep.sorted(Statistic::lr_dstar), cfg.q);
  const std::size_t k = lr.size() * 9 / 10;
  CHECK(lr[k].second > ad[k].second);
}

TEST_CASE("statistic names") {
  for (auto s : {Statistic::lr, Statistic::lr_star, Statistic::lr_dstar})
    CHECK(statistic_from_string(to_string(s)) == s);
  CHECK(statistic_from_string("lr_dstar") == Statistic::lr_dstar);
  CHECK_THROWS_AS(statistic_from_string("Wald"), InputError);
}
