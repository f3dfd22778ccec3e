#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "eivlr/likelihood.hpp"
#include "eivlr/model.hpp"
#include "eivlr/simulate.hpp"
#include "eivlr/skovgaard.hpp"

namespace eivlr {

/// Columns per row: y (m), x (p), vech Sigma_e, Sigma_ue (p x m, row-major),
/// vech Sigma_u.
int record_width(int m, int p);
std::vector<std::string> record_header(int m, int p);

/// CSV with one header line. Blank lines and lines starting with '#' are
/// skipped. Errors carry the 1-based line number; PSD violations name the
/// offending line as well.
Dataset read_dataset(std::istream& in, int m, int p, const std::string& source = "<stream>");
Dataset load_dataset(const std::filesystem::path& path, int m, int p);

/// Full precision, so load_dataset(write_dataset(d)) == d.
void write_dataset(std::ostream& out, const Dataset& data);
void write_dataset(const std::filesystem::path& path, const Dataset& data);

/// "i=v" pairs over vec(beta), 0-based.
HypothesisSpec parse_hypothesis(const std::vector<std::string>& pairs, const ModelDims& dims);

/// Flat "key = value" file; '#' starts a comment. Required keys: family,
/// m, p, q, n, reps, seed, plus nu (student_t) or lambda (power_exponential).
/// Optional: levels, power_grid, threads. Lists are comma separated.
SimConfig parse_config(std::istream& in, const std::string& source = "<stream>");
SimConfig load_config(const std::filesystem::path& path);

nlohmann::json to_json(const ParameterVector& theta);
nlohmann::json to_json(const FitResult& fit);
nlohmann::json to_json(const TestReport& report);
nlohmann::json to_json(const SimReport& report);

/// Fixed-width rendering of LR, LR*_a and LR**_a with p-values.
std::string render_table(const TestReport& report);

/// statistic,level,eta,rejections,valid,rate,se
void write_rates_csv(std::ostream& out, const SimReport& report);
/// chi2_quantile,relative_discrepancy
void write_curve_csv(std::ostream& out, const std::vector<std::pair<double, double>>& curve);

}  // namespace eivlr
