#include "eivlr/cli.hpp"

#include <fstream>
#include <ostream>
#include <vector>

#include "CLI11.hpp"

#include "eivlr/error.hpp"
#include "eivlr/io.hpp"
#include "eivlr/likelihood.hpp"
#include "eivlr/simulate.hpp"
#include "eivlr/skovgaard.hpp"

namespace eivlr {

namespace {

struct DataFlags {
  std::string data;
  int m = 1;
  int p = 1;
  std::string family = "normal";
  std::optional<double> nu;
  std::optional<double> lambda;
  std::string out;
};

struct StudyFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> reps;
  std::optional<int> threads;
  bool full = false;
  std::string out;
};

void add_data_flags(CLI::App* cmd, DataFlags& f) {
  cmd->add_option("--data", f.data, "CSV file: y, x, vech Sigma_e, Sigma_ue, vech Sigma_u")
      ->required();
  cmd->add_option("--m", f.m, "number of responses")->check(CLI::PositiveNumber);
  cmd->add_option("--p", f.p, "number of covariates")->check(CLI::PositiveNumber);
  cmd->add_option("--family", f.family, "normal | student_t | power_exponential");
  cmd->add_option("--nu", f.nu, "Student-t degrees of freedom (> 2)");
  cmd->add_option("--lambda", f.lambda, "power exponential shape in (0, 1]");
  cmd->add_option("--out", f.out, "write JSON here instead of stdout");
}

void add_study_flags(CLI::App* cmd, StudyFlags& f) {
  cmd->add_option("--config", f.config, "flat key = value study file")->required();
  cmd->add_option("--seed", f.seed, "override the config seed");
  cmd->add_option("--reps", f.reps, "override the number of replications")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--threads", f.threads, "worker threads (0 = all cores)");
  cmd->add_flag("--full", f.full, "use 10000 replications");
}

SimConfig study_config(const StudyFlags& f) {
  SimConfig cfg = load_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (f.full) cfg.replications = 10000;
  if (f.reps) cfg.replications = *f.reps;
  if (f.threads) cfg.threads = *f.threads;
  cfg.validate();
  return cfg;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream file(path);
  if (!file) throw InputError("io", "cannot write " + path);
  return file;
}

void emit_json(const nlohmann::json& j, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << j.dump(2) << '\n';
  } else {
    auto file = open_out(path);
    file << j.dump(2) << '\n';
  }
}

std::string one_line(std::string s) {
  for (auto& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

int fail(std::ostream& err, const std::string& code, const std::string& message, int exit_code) {
  err << "error: " << code << ": " << one_line(message) << '\n';
  return exit_code;
}

}  // namespace

EllipticalFamily family_from_flags(const std::string& family, std::optional<double> nu,
                                   std::optional<double> lambda, int dim) {
  const FamilyKind kind = family_kind_from_string(family);
  double shape = 0.0;
  if (kind == FamilyKind::student_t) {
    if (!nu) throw InputError("missing_flag", "student_t needs --nu");
    shape = *nu;
  } else if (kind == FamilyKind::power_exponential) {
    if (!lambda) throw InputError("missing_flag", "power_exponential needs --lambda");
    shape = *lambda;
  }
  try {
    return EllipticalFamily::make(kind, shape, dim);
  } catch (const DomainError& e) {
    throw InputError("bad_value", e.what());
  }
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Likelihood ratio tests with Skovgaard's adjustment for elliptical "
               "errors-in-variables regression"};
  app.name("eivlr");
  app.require_subcommand(1);

  DataFlags fit_flags;
  auto* fit_cmd = app.add_subcommand("fit", "maximum likelihood fit");
  add_data_flags(fit_cmd, fit_flags);

  DataFlags test_flags;
  std::vector<std::string> beta_pairs;
  bool table_only = false;
  auto* test_cmd = app.add_subcommand("test", "LR, LR*_a and LR**_a for H0 on vec(beta)");
  add_data_flags(test_cmd, test_flags);
  test_cmd->add_option("--beta", beta_pairs, "index=value over vec(beta), 0-based")->required();
  test_cmd->add_flag("--table", table_only, "print the table instead of JSON");

  StudyFlags sim_flags;
  auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo size or power study");
  add_study_flags(sim_cmd, sim_flags);
  sim_cmd->add_option("--out", sim_flags.out, "prefix for <out>.csv and <out>.json");

  StudyFlags disc_flags;
  std::string stat_name = "LR**";
  auto* disc_cmd = app.add_subcommand("discrepancy", "relative quantile discrepancy curve");
  add_study_flags(disc_cmd, disc_flags);
  disc_cmd->add_option("--stat", stat_name, "LR | LR* | LR**");
  disc_cmd->add_option("--out", disc_flags.out, "two-column CSV file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    return fail(err, "usage", e.what(), kExitUsage);
  }

  try {
    if (*fit_cmd) {
      const Dataset data = load_dataset(fit_flags.data, fit_flags.m, fit_flags.p);
      const auto family = family_from_flags(fit_flags.family, fit_flags.nu, fit_flags.lambda,
                                            fit_flags.m + fit_flags.p);
      emit_json(to_json(fit_mle(data, family)), fit_flags.out, out);
    } else if (*test_cmd) {
      const Dataset data = load_dataset(test_flags.data, test_flags.m, test_flags.p);
      const auto family = family_from_flags(test_flags.family, test_flags.nu, test_flags.lambda,
                                            test_flags.m + test_flags.p);
      const auto hyp = parse_hypothesis(beta_pairs, data.dims());
      const TestReport report = lr_test(data, family, hyp);
      // JSON goes to --out when given, the table then takes stdout.
      if (!test_flags.out.empty() || !table_only) emit_json(to_json(report), test_flags.out, out);
      if (table_only || !test_flags.out.empty()) out << render_table(report);
    } else if (*sim_cmd) {
      const SimConfig cfg = study_config(sim_flags);
      const SimReport report =
          cfg.power_grid.empty() ? run_null_study(cfg) : run_power_study(cfg);
      if (sim_flags.out.empty()) {
        out << to_json(report).dump(2) << '\n';
      } else {
        auto csv = open_out(sim_flags.out + ".csv");
        write_rates_csv(csv, report);
        auto json_file = open_out(sim_flags.out + ".json");
        json_file << to_json(report).dump(2) << '\n';
        write_rates_csv(out, report);
      }
      if (report.unreliable)
        err << "warning: " << report.failures << " of " << report.replications
            << " replications failed to fit\n";
    } else if (*disc_cmd) {
      const Statistic stat = statistic_from_string(stat_name);
      const SimConfig cfg = study_config(disc_flags);
      const SimReport report = run_null_study(cfg);
      const auto curve = discrepancy_curve(report.sorted(stat), cfg.q);
      if (disc_flags.out.empty()) {
        write_curve_csv(out, curve);
      } else {
        auto file = open_out(disc_flags.out);
        write_curve_csv(file, curve);
      }
    }
  } catch (const InputError& e) {
    return fail(err, e.code(), e.what(), kExitInput);
  } catch (const FitFailure& e) {
    return fail(err, "fit_failure", e.what(), kExitFit);
  } catch (const NotPositiveDefinite& e) {
    return fail(err, "not_positive_definite", e.what(), kExitNumeric);
  } catch (const DomainError& e) {
    return fail(err, "domain_error", e.what(), kExitNumeric);
  } catch (const std::exception& e) {
    return fail(err, "internal", e.what(), kExitInternal);
  }
  return kExitOk;
}

}  // namespace eivlr
