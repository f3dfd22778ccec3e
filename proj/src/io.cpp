#include "eivlr/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "eivlr/error.hpp"

namespace eivlr {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, sep)) out.push_back(trim(field));
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

bool parse_double(const std::string& text, double& value) {
  if (text.empty()) return false;
  const char* begin = text.data();
  if (*begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, text.data() + text.size(), value);
  return ec == std::errc() && ptr == text.data() + text.size();
}

double parse_number(const std::string& text, const std::string& what) {
  double value;
  if (!parse_double(text, value))
    throw InputError("bad_value", what + ": cannot parse '" + text + "' as a number");
  return value;
}

long parse_integer(const std::string& text, const std::string& what) {
  long value;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size())
    throw InputError("bad_value", what + ": cannot parse '" + text + "' as an integer");
  return value;
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  for (const auto& item : split(text, ','))
    if (!item.empty()) out.push_back(parse_number(item, what));
  return out;
}

bool is_skippable(const std::string& line) {
  const auto t = trim(line);
  return t.empty() || t.front() == '#';
}

std::string fmt(double x, int precision) {
  std::ostringstream ss;
  ss << std::setprecision(precision) << x;
  return ss.str();
}

json number_or_null(double x) {
  if (std::isfinite(x)) return x;
  return nullptr;
}

json matrix_json(const MatrixXd& a) {
  json rows = json::array();
  for (int r = 0; r < a.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < a.cols(); ++c) row.push_back(number_or_null(a(r, c)));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_json(const VectorXd& v) {
  json out = json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(number_or_null(v(i)));
  return out;
}

}  // namespace

int record_width(int m, int p) {
  return m + p + m * (m + 1) / 2 + p * m + p * (p + 1) / 2;
}

std::vector<std::string> record_header(int m, int p) {
  if (m == 1 && p == 1) return {"y", "x", "var_e", "cov_ue", "var_u"};
  std::vector<std::string> h;
  for (int k = 0; k < m; ++k) h.push_back("y" + std::to_string(k + 1));
  for (int k = 0; k < p; ++k) h.push_back("x" + std::to_string(k + 1));
  for (int c = 0; c < m; ++c)
    for (int r = c; r < m; ++r) h.push_back("se_" + std::to_string(r + 1) + std::to_string(c + 1));
  for (int r = 0; r < p; ++r)
    for (int c = 0; c < m; ++c) h.push_back("sue_" + std::to_string(r + 1) + std::to_string(c + 1));
  for (int c = 0; c < p; ++c)
    for (int r = c; r < p; ++r) h.push_back("su_" + std::to_string(r + 1) + std::to_string(c + 1));
  return h;
}

Dataset read_dataset(std::istream& in, int m, int p, const std::string& source) {
  if (m < 1 || p < 1) throw InputError("bad_dims", "m and p must be positive");
  const int width = record_width(m, p);
  const int ne = m * (m + 1) / 2;
  const int nu = p * (p + 1) / 2;

  Dataset data;
  data.m = m;
  data.p = p;
  std::vector<long> line_of;
  std::string line;
  long lineno = 0;
  bool header_seen = false;

  while (std::getline(in, line)) {
    ++lineno;
    if (is_skippable(line)) continue;
    const auto fields = split(line, ',');
    const std::string where = source + ":" + std::to_string(lineno);
    if (static_cast<int>(fields.size()) != width)
      throw InputError(header_seen ? "malformed_row" : "bad_header",
                       where + ": expected " + std::to_string(width) + " columns, found " +
                           std::to_string(fields.size()));
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    VectorXd values(width);
    for (int k = 0; k < width; ++k) {
      if (!parse_double(fields[k], values(k)))
        throw InputError("malformed_row", where + ": column " + std::to_string(k + 1) +
                                              " is not a number ('" + fields[k] + "')");
      if (!std::isfinite(values(k)))
        throw InputError("malformed_row", where + ": column " + std::to_string(k + 1) +
                                              " is not finite");
    }
    int at = 0;
    data.z.push_back(values.segment(at, m + p));
    at += m + p;
    data.sigma_e.push_back(unvech(values.segment(at, ne), m));
    at += ne;
    MatrixXd sue(p, m);
    for (int r = 0; r < p; ++r)
      for (int c = 0; c < m; ++c) sue(r, c) = values(at++);
    data.sigma_ue.push_back(sue);
    data.sigma_u.push_back(unvech(values.segment(at, nu), p));
    line_of.push_back(lineno);
  }
  if (!header_seen) throw InputError("bad_header", source + ": missing header line");
  if (data.z.empty()) throw InputError("empty_dataset", source + ": no data rows");

  try {
    data.validate();
  } catch (const NotPositiveDefinite& e) {
    throw InputError("psd_violation", source + ":" + std::to_string(line_of.at(e.index())) +
                                          ": row " + std::to_string(e.index() + 1) +
                                          " error scale matrix is not positive semidefinite");
  }
  return data;
}

Dataset load_dataset(const std::filesystem::path& path, int m, int p) {
  std::ifstream in(path);
  if (!in) throw InputError("io", "cannot open " + path.string());
  return read_dataset(in, m, p, path.string());
}

void write_dataset(std::ostream& out, const Dataset& data) {
  const auto header = record_header(data.m, data.p);
  for (std::size_t k = 0; k < header.size(); ++k) out << (k ? "," : "") << header[k];
  out << '\n';
  const auto old = out.precision(std::numeric_limits<double>::max_digits10);
  for (int i = 0; i < data.n(); ++i) {
    std::vector<double> row(data.z[i].data(), data.z[i].data() + data.z[i].size());
    const VectorXd se = vech(data.sigma_e[i]);
    row.insert(row.end(), se.data(), se.data() + se.size());
    for (int r = 0; r < data.p; ++r)
      for (int c = 0; c < data.m; ++c) row.push_back(data.sigma_ue[i](r, c));
    const VectorXd su = vech(data.sigma_u[i]);
    row.insert(row.end(), su.data(), su.data() + su.size());
    for (std::size_t k = 0; k < row.size(); ++k) out << (k ? "," : "") << row[k];
    out << '\n';
  }
  out.precision(old);
}

void write_dataset(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw InputError("io", "cannot write " + path.string());
  write_dataset(out, data);
}

HypothesisSpec parse_hypothesis(const std::vector<std::string>& pairs, const ModelDims& dims) {
  HypothesisSpec hyp;
  std::vector<double> values;
  for (const auto& pair : pairs) {
    const auto eq = pair.find('=');
    if (eq == std::string::npos)
      throw InputError("bad_hypothesis", "expected index=value, got '" + pair + "'");
    try {
      const auto idx = parse_integer(trim(pair.substr(0, eq)), "hypothesis index");
      hyp.psi_indices.push_back(static_cast<int>(idx));
      values.push_back(parse_number(trim(pair.substr(eq + 1)), "hypothesis value"));
    } catch (const InputError& e) {
      throw InputError("bad_hypothesis", e.what());
    }
  }
  hyp.psi0 = Eigen::Map<const VectorXd>(values.data(), static_cast<long>(values.size()));
  hyp.validate(dims);
  return hyp;
}

SimConfig parse_config(std::istream& in, const std::string& source) {
  std::map<std::string, std::string> kv;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw InputError("bad_config", where + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    static const std::vector<std::string> known{"family", "nu",   "lambda", "m",      "p",
                                                "q",      "n",    "reps",   "seed",   "levels",
                                                "power_grid", "threads"};
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw InputError("unknown_key", where + ": unknown key '" + key + "'");
    if (kv.contains(key)) throw InputError("duplicate_key", where + ": key '" + key + "' repeated");
    kv[key] = trim(line.substr(eq + 1));
  }

  auto required = [&](const std::string& key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end() || it->second.empty())
      throw InputError("missing_key", source + ": missing required key '" + key + "'");
    return it->second;
  };
  auto int_key = [&](const std::string& key) {
    const long v = parse_integer(required(key), key);
    if (v < 0 || v > std::numeric_limits<int>::max())
      throw InputError("bad_value", key + " out of range");
    return static_cast<int>(v);
  };

  SimConfig cfg;
  cfg.family = family_kind_from_string(required("family"));
  if (cfg.family == FamilyKind::student_t) cfg.shape = parse_number(required("nu"), "nu");
  if (cfg.family == FamilyKind::power_exponential)
    cfg.shape = parse_number(required("lambda"), "lambda");
  cfg.m = int_key("m");
  cfg.p = int_key("p");
  cfg.q = int_key("q");
  cfg.n = int_key("n");
  cfg.replications = int_key("reps");
  const long seed = parse_integer(required("seed"), "seed");
  if (seed < 0) throw InputError("bad_value", "seed must be non-negative");
  cfg.seed = static_cast<std::uint64_t>(seed);
  if (kv.contains("levels")) cfg.levels = parse_list(kv["levels"], "levels");
  if (kv.contains("power_grid")) cfg.power_grid = parse_list(kv["power_grid"], "power_grid");
  if (kv.contains("threads")) cfg.threads = int_key("threads");

  try {
    cfg.validate();
  } catch (const DomainError& e) {
    throw InputError("bad_value", source + ": " + e.what());
  }
  return cfg;
}

SimConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("io", "cannot open " + path.string());
  return parse_config(in, path.string());
}

json to_json(const ParameterVector& theta) {
  return {{"beta", matrix_json(theta.beta())},
          {"alpha", vector_json(theta.alpha())},
          {"mu_x", vector_json(theta.mu_x())},
          {"sigma_q", matrix_json(theta.sigma_q())},
          {"sigma_x", matrix_json(theta.sigma_x())},
          {"theta", vector_json(theta.values())}};
}

json to_json(const FitResult& fit) {
  json j{{"theta", to_json(fit.theta_hat)},
         {"loglik", number_or_null(fit.loglik)},
         {"score_norm", number_or_null(fit.score_norm)},
         {"observed_info", matrix_json(fit.observed_info)},
         {"iterations", fit.iterations},
         {"fallback_steps", fit.fallback_steps},
         {"converged", fit.converged},
         {"diagnostics",
          {{"min_info_eigenvalue", number_or_null(fit.diagnostics.min_info_eigenvalue)},
           {"info_condition", number_or_null(fit.diagnostics.info_condition)},
           {"warnings", fit.diagnostics.warnings}}}};
  if (fit.constrained) {
    j["constraint"] = {{"indices", fit.constrained->psi_indices},
                       {"values", vector_json(fit.constrained->psi0)}};
  } else {
    j["constraint"] = nullptr;
  }
  return j;
}

json to_json(const TestReport& r) {
  return {{"lr", number_or_null(r.lr)},
          {"log_rho", number_or_null(r.log_rho)},
          {"lr_star", number_or_null(r.lr_star)},
          {"lr_dstar", number_or_null(r.lr_dstar)},
          {"q", r.q},
          {"p_lr", number_or_null(r.p_lr)},
          {"p_lr_star", number_or_null(r.p_lr_star)},
          {"p_lr_dstar", number_or_null(r.p_lr_dstar)},
          {"flags",
           {{"lr_near_zero", r.flags.lr_near_zero},
            {"rho_nonpositive_determinant", r.flags.rho_nonpositive_determinant},
            {"fit_warning", r.flags.fit_warning}}},
          {"rho_failure", r.rho_failure},
          {"hypothesis",
           {{"indices", r.hypothesis.psi_indices}, {"values", vector_json(r.hypothesis.psi0)}}},
          {"fit_hat", to_json(r.fit_hat)},
          {"fit_tilde", to_json(r.fit_tilde)}};
}

json to_json(const SimReport& r) {
  const auto& c = r.config;
  json rates = json::array();
  for (const auto& e : r.rates)
    rates.push_back({{"statistic", to_string(e.statistic)},
                     {"level", e.level},
                     {"eta", e.eta},
                     {"rejections", e.rejections},
                     {"valid", e.valid},
                     {"rate", number_or_null(e.rate)},
                     {"se", number_or_null(e.se)}});
  return {{"config",
           {{"family", to_string(c.family)},
            {"shape", c.shape},
            {"m", c.m},
            {"p", c.p},
            {"q", c.q},
            {"n", c.n},
            {"reps", c.replications},
            {"seed", c.seed},
            {"levels", c.levels},
            {"power_grid", c.power_grid}}},
          {"rates", rates},
          {"replications", r.replications},
          {"failures", r.failures},
          {"rho_fallbacks", r.rho_fallbacks},
          {"unreliable", r.unreliable}};
}

std::string render_table(const TestReport& r) {
  std::ostringstream out;
  auto row = [&](const std::string& name, double stat, double pval) {
    out << std::left << std::setw(10) << name << std::right << std::setw(12)
        << (std::isfinite(stat) ? fmt(stat, 6) : "nan") << "  (" << fmt(pval, 4) << ")\n";
  };
  out << std::left << std::setw(10) << "statistic" << std::right << std::setw(12) << "value"
      << "  (p-value)\n";
  row("LR", r.lr, r.p_lr);
  row("LR*", r.lr_star, r.p_lr_star);
  row("LR**", r.lr_dstar, r.p_lr_dstar);
  out << "q = " << r.q << ", log rho = " << (std::isfinite(r.log_rho) ? fmt(r.log_rho, 6) : "nan")
      << '\n';
  if (r.flags.lr_near_zero) out << "note: LR near zero, adjustment skipped\n";
  if (r.flags.rho_nonpositive_determinant)
    out << "note: adjustment unavailable (" << r.rho_failure << "), LR reported\n";
  if (r.flags.fit_warning) out << "note: fit diagnostics raised warnings\n";
  return out.str();
}

void write_rates_csv(std::ostream& out, const SimReport& report) {
  out << "statistic,level,eta,rejections,valid,rate,se\n";
  for (const auto& e : report.rates)
    out << to_string(e.statistic) << ',' << fmt(e.level, 6) << ',' << fmt(e.eta, 6) << ','
        << e.rejections << ',' << e.valid << ',' << fmt(e.rate, 6) << ',' << fmt(e.se, 6) << '\n';
}

void write_curve_csv(std::ostream& out, const std::vector<std::pair<double, double>>& curve) {
  out << "chi2_quantile,relative_discrepancy\n";
  const auto old = out.precision(std::numeric_limits<double>::max_digits10);
  for (const auto& [x, d] : curve) out << x << ',' << d << '\n';
  out.precision(old);
}

}  // namespace eivlr
