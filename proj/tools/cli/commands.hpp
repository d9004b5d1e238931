#pragma once

// Subcommands of the inactq command-line tool. Kept in a header so the
// tests can drive them in-process.

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "inactivity/core.hpp"
#include "inactivity/error.hpp"
#include "inactivity/inference.hpp"
#include "inactivity/km.hpp"
#include "inactivity/model.hpp"
#include "inactivity/simulate.hpp"

namespace inactivity::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitIo = 4;

inline constexpr const char* kVersion = "1.0.0";

using json = nlohmann::ordered_json;

inline int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::RankDeficient:
    case ErrorCode::Unbounded:
    case ErrorCode::IterationLimit:
    case ErrorCode::ZeroCensoringSurvival:
    case ErrorCode::TooManyRedraws:
    case ErrorCode::DegenerateEnsemble:
    case ErrorCode::NegativeVariance:
    case ErrorCode::SingularGamma:
    case ErrorCode::InvalidRegime:
    case ErrorCode::NoSolution:
      return kExitNumerical;
    case ErrorCode::Io:
      return kExitIo;
    default:
      return kExitUsage;
  }
}

/// Shortest round-trip decimal form; independent of locale.
inline std::string format_number(double value) {
  if (std::isnan(value)) return "NA";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

inline json number_or_null(double value) { return std::isfinite(value) ? json(value) : json(nullptr); }

namespace detail {

inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  for (auto part : inactivity::detail::split_commas(text))
    if (!part.empty()) out.emplace_back(part);
  return out;
}

inline std::vector<double> parse_numbers(const std::string& text, const std::string& what) {
  std::vector<double> out;
  for (const auto& token : split_list(text)) {
    const auto value = inactivity::detail::parse_double(token);
    if (!value) throw Error(ErrorCode::InvalidArgument, what + ": '" + token + "' is not a number");
    out.push_back(*value);
  }
  return out;
}

inline Dataset read_dataset(const std::string& path, const std::string& time_col, const std::string& status_col,
                            const std::vector<std::string>& covariates) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open data file '" + path + "'");
  return load_dataset(in, time_col, status_col, covariates);
}

/// Writes to `path`, or to `fallback` when the path is empty.
inline void emit(const std::string& path, const std::string& text, std::ostream& fallback) {
  if (path.empty()) {
    fallback << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path + "'");
  out << text;
  if (!out.flush()) throw Error(ErrorCode::Io, "failed writing '" + path + "'");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// fit

struct FitArgs {
  std::string data;
  std::string time_col = "time";
  std::string status_col = "status";
  std::string covariates;
  double t0 = 0.0;
  std::vector<double> quantiles;
  std::size_t perturb = 400;
  std::uint64_t seed = 1;
  double alpha = 0.05;
  std::optional<double> truncate;
  std::string predict;
  std::string global_null;
  std::string format = "json";
  std::string out;
  unsigned threads = 0;
  int min_events = 10;
};

inline json fit_report(const FitArgs& args) {
  const auto covariates = detail::split_list(args.covariates);
  const Dataset data = detail::read_dataset(args.data, args.time_col, args.status_col, covariates);
  const std::vector<double> quantiles = args.quantiles.empty() ? std::vector<double>{0.5} : args.quantiles;
  const auto predict = detail::parse_numbers(args.predict, "--predict");
  const auto null = detail::parse_numbers(args.global_null, "--global-null");
  if (!args.predict.empty() && predict.size() != data.p())
    throw Error(ErrorCode::LengthMismatch, "--predict needs " + std::to_string(data.p()) + " values");
  if (!args.global_null.empty() && null.size() != data.p() + 1)
    throw Error(ErrorCode::LengthMismatch, "--global-null needs " + std::to_string(data.p() + 1) + " values");
  if (!(args.alpha > 0.0 && args.alpha < 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must be in (0,1)");
  if (args.perturb < 2) throw Error(ErrorCode::InvalidArgument, "--perturb must be at least 2");

  ModelConfig base;
  base.t0 = args.t0;
  base.truncation_bound = args.truncate;
  base.min_events = args.min_events;
  for (double q : quantiles) {
    base.lambda = q;
    check_config(base);
  }
  const auto report = validate(data, base);

  std::vector<std::string> terms{"(Intercept)"};
  for (const auto& c : covariates) terms.push_back(c);

  json doc;
  doc["command"] = "fit";
  doc["version"] = kVersion;
  json meta;
  meta["data"] = args.data;
  meta["t0"] = args.t0;
  meta["n"] = data.n();
  meta["p"] = data.p();
  meta["events_before_t0"] = report.events_before_t0;
  meta["censoring_proportion"] = report.censoring_proportion;
  meta["perturbations"] = args.perturb;
  meta["seed"] = args.seed;
  meta["alpha"] = args.alpha;
  meta["truncation_bound"] = args.truncate ? json(*args.truncate) : json(nullptr);
  meta["covariates"] = covariates;
  doc["metadata"] = meta;

  json fits = json::array();
  for (double q : quantiles) {
    ModelConfig config = base;
    config.lambda = q;
    const FitResult f = fit(data, config);
    PerturbationOptions popt;
    popt.replicates = args.perturb;
    popt.seed = args.seed;
    popt.threads = args.threads;
    const auto ens = perturb_fit(data, config, f, popt);
    const auto inf = wald_report(f, covariance_from_ensemble(ens), args.alpha);

    json entry;
    entry["quantile"] = q;
    entry["n_effective"] = f.n_effective;
    entry["objective"] = f.objective;
    json coefs = json::array();
    for (std::size_t k = 0; k < terms.size(); ++k) {
      const auto ki = static_cast<Eigen::Index>(k);
      json row;
      row["name"] = terms[k];
      row["estimate"] = f.beta[ki];
      row["se"] = inf.se[ki];
      row["ci_lower"] = inf.ci_lower[ki];
      row["ci_upper"] = inf.ci_upper[ki];
      row["wald_z"] = inf.wald_z[ki];
      row["significant"] = static_cast<bool>(inf.significant[k]);
      coefs.push_back(row);
    }
    entry["coefficients"] = coefs;
    entry["estimating_equation"] = std::vector<double>(f.eq_residual.data(), f.eq_residual.data() + f.eq_residual.size());
    entry["estimating_equation_bound"] = estimating_equation_bound(data, f);
    entry["perturbation_redraws"] = ens.redraws;
    entry["warnings"] = f.warnings;
    if (!args.global_null.empty()) {
      const Eigen::VectorXd beta0 = Eigen::Map<const Eigen::VectorXd>(null.data(), static_cast<Eigen::Index>(null.size()));
      const auto g = global_test(data, config, beta0);
      entry["global_test"] = {{"null", null}, {"statistic", g.statistic}, {"df", g.df}, {"p_value", g.p_value}};
    }
    if (!args.predict.empty())
      entry["prediction"] = {{"z", predict}, {"value", predict_quantile_inactivity(f, predict)}};
    fits.push_back(entry);
  }
  doc["fits"] = fits;
  return doc;
}

/// One row per quantile and term. Global-test and prediction results are
/// extra rows whose `term` names them.
inline std::string fit_report_csv(const json& doc) {
  std::ostringstream out;
  out << "quantile,term,estimate,se,ci_lower,ci_upper,significant\n";
  for (const auto& f : doc["fits"]) {
    const std::string q = format_number(f["quantile"].get<double>());
    for (const auto& c : f["coefficients"])
      out << q << ',' << c["name"].get<std::string>() << ',' << format_number(c["estimate"].get<double>()) << ','
          << format_number(c["se"].get<double>()) << ',' << format_number(c["ci_lower"].get<double>()) << ','
          << format_number(c["ci_upper"].get<double>()) << ',' << (c["significant"].get<bool>() ? 1 : 0) << '\n';
    if (f.contains("prediction"))
      out << q << ",prediction," << format_number(f["prediction"]["value"].get<double>()) << ",,,,\n";
    if (f.contains("global_test")) {
      out << q << ",global_statistic," << format_number(f["global_test"]["statistic"].get<double>()) << ",,,,\n";
      out << q << ",global_p_value," << format_number(f["global_test"]["p_value"].get<double>()) << ",,,,\n";
    }
  }
  return out.str();
}

inline int run_fit(const FitArgs& args, std::ostream& out) {
  if (args.format != "json" && args.format != "csv")
    throw Error(ErrorCode::InvalidArgument, "--format must be json or csv");
  const json doc = fit_report(args);
  detail::emit(args.out, args.format == "json" ? doc.dump(2) + "\n" : fit_report_csv(doc), out);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// km

struct KmArgs {
  std::string data;
  std::string time_col = "time";
  std::string status_col = "status";
  std::optional<double> truncate;
  std::string out;
};

inline std::string km_csv(const StepFunction& g) {
  std::ostringstream out;
  out << "# censoring Kaplan-Meier G(t) = P(C >= t). Each row gives the value just after `time`;\n"
         "# at exactly `time` the curve still takes the previous row's value.\n";
  out << "time,survival\n";
  if (g.jump_times().empty() || g.jump_times().front() > 0.0) out << "0,1\n";
  for (std::size_t k = 0; k < g.jump_times().size(); ++k)
    out << format_number(g.jump_times()[k]) << ',' << format_number(g.values()[k]) << '\n';
  return out.str();
}

inline int run_km(const KmArgs& args, std::ostream& out) {
  const Dataset data = detail::read_dataset(args.data, args.time_col, args.status_col, {});
  const auto status = data.statuses();
  if (args.truncate && !(*args.truncate > 0.0))
    throw Error(ErrorCode::InvalidArgument, "truncation bound must be positive");
  const auto times = args.truncate ? truncated_censoring_times(data, *args.truncate) : data.times();
  detail::emit(args.out, km_csv(fit_censoring_km(times, status)), out);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// simulate

/// Reads `key = value` lines; `#` starts a comment. Lists are comma-separated.
inline SimConfig parse_sim_config(std::istream& in) {
  SimConfig c;
  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, std::size_t> seen;
  auto fail = [&](const std::string& msg) {
    throw Error(ErrorCode::ConfigParse, "line " + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto body = inactivity::detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) fail("expected key = value");
    const std::string key(inactivity::detail::trim(body.substr(0, eq)));
    const std::string value(inactivity::detail::trim(body.substr(eq + 1)));
    if (key.empty() || value.empty()) fail("expected key = value");
    if (!seen.emplace(key, line_no).second) fail("duplicate key '" + key + "'");

    auto numbers = [&] {
      std::vector<double> v;
      for (const auto& token : detail::split_list(value)) {
        const auto x = inactivity::detail::parse_double(token);
        if (!x) fail("'" + token + "' is not a number");
        v.push_back(*x);
      }
      if (v.empty()) fail("empty list for '" + key + "'");
      return v;
    };
    auto number = [&] {
      const auto v = numbers();
      if (v.size() != 1) fail("'" + key + "' takes a single value");
      return v.front();
    };
    auto count = [&] {
      const double x = number();
      if (x < 0.0 || x != std::floor(x) || x > 1e15) fail("'" + key + "' must be a nonnegative integer");
      return static_cast<std::size_t>(x);
    };

    if (key == "rho") c.spec.rho = number();
    else if (key == "eta") c.spec.eta = number();
    else if (key == "beta") c.betas = numbers();
    else if (key == "n_per_group") c.spec.n_control = c.spec.n_intervention = count();
    else if (key == "n_control") c.spec.n_control = count();
    else if (key == "n_intervention") c.spec.n_intervention = count();
    else if (key == "t0") c.t0_list = numbers();
    else if (key == "lambda") c.lambda = number();
    else if (key == "censoring") c.censoring_targets = numbers();
    else if (key == "n_sims") c.n_sims = count();
    else if (key == "n_perturb") c.n_perturb = count();
    else if (key == "alpha") c.alpha = number();
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(count());
    else if (key == "threads") c.threads = static_cast<unsigned>(count());
    else if (key == "global_test") {
      if (value == "true") c.global_test = true;
      else if (value == "false") c.global_test = false;
      else fail("global_test must be true or false");
    } else if (key == "max_failure_fraction") c.max_failure_fraction = number();
    else fail("unknown key '" + key + "'");
  }
  return c;
}

inline std::string table1_csv(const SimulationTable& t) {
  std::ostringstream out;
  out << "t0,c_pct,n_control,n_intervention,hazard_beta,true_beta0,true_beta1,"
         "bias_beta0,sd_beta0,ase_beta0,bias_beta1,sd_beta1,ase_beta1,theta0_hat,theta1_hat,"
         "achieved_c_pct,n_completed,n_failed,cell_failed\n";
  for (const auto& c : t.cells)
    out << format_number(c.t0) << ',' << format_number(100.0 * c.censoring_target) << ',' << c.n_control << ','
        << c.n_intervention << ',' << format_number(c.hazard_beta) << ',' << format_number(c.true_beta0) << ','
        << format_number(c.true_beta1) << ',' << format_number(c.bias_beta0) << ',' << format_number(c.sd_beta0)
        << ',' << format_number(c.ase_beta0) << ',' << format_number(c.bias_beta1) << ','
        << format_number(c.sd_beta1) << ',' << format_number(c.ase_beta1) << ',' << format_number(c.theta0_hat)
        << ',' << format_number(c.theta1_hat) << ',' << format_number(100.0 * c.achieved_censoring) << ','
        << c.n_completed << ',' << c.n_failed << ',' << (c.failed ? 1 : 0) << '\n';
  return out.str();
}

/// Rejection rates with one column per hazard coefficient, rows keyed by
/// (t0, censoring, group sizes).
inline std::string table2_csv(const SimulationTable& t) {
  std::vector<double> betas;
  for (const auto& c : t.cells)
    if (std::find(betas.begin(), betas.end(), c.hazard_beta) == betas.end()) betas.push_back(c.hazard_beta);
  struct Key {
    double t0, cens;
    std::size_t n0, n1;
    bool operator==(const Key&) const = default;
  };
  std::vector<Key> keys;
  for (const auto& c : t.cells) {
    const Key k{c.t0, c.censoring_target, c.n_control, c.n_intervention};
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
  }
  std::ostringstream out;
  out << "t0,c_pct,n_control,n_intervention";
  for (double b : betas) out << ",reject_beta_" << format_number(b);
  for (double b : betas) out << ",global_reject_beta_" << format_number(b);
  out << '\n';
  for (const auto& k : keys) {
    out << format_number(k.t0) << ',' << format_number(100.0 * k.cens) << ',' << k.n0 << ',' << k.n1;
    for (int pass = 0; pass < 2; ++pass)
      for (double b : betas) {
        std::string cell = "NA";
        for (const auto& c : t.cells)
          if (Key{c.t0, c.censoring_target, c.n_control, c.n_intervention} == k && c.hazard_beta == b)
            cell = format_number(pass == 0 ? c.rejection_rate : c.global_rejection_rate);
        out << ',' << cell;
      }
    out << '\n';
  }
  return out.str();
}

inline json simulation_json(const SimulationTable& t) {
  json doc;
  doc["command"] = "simulate";
  doc["version"] = kVersion;
  doc["metadata"] = {{"lambda", t.lambda}, {"alpha", t.alpha}, {"n_sims", t.n_sims},
                     {"n_perturb", t.n_perturb}, {"seed", t.seed}};
  json cells = json::array();
  for (const auto& c : t.cells) {
    json cell;
    cell["t0"] = c.t0;
    cell["censoring_target"] = c.censoring_target;
    cell["censoring_interval"] = {{"a", c.interval.a}, {"b", number_or_null(c.interval.b)}};
    cell["achieved_censoring"] = c.achieved_censoring;
    cell["n_control"] = c.n_control;
    cell["n_intervention"] = c.n_intervention;
    cell["hazard_beta"] = c.hazard_beta;
    cell["truth"] = {{"beta0", c.true_beta0}, {"beta1", c.true_beta1}, {"theta0", c.true_theta0},
                     {"theta1", c.true_theta1}};
    cell["beta0"] = {{"bias", c.bias_beta0}, {"sd", c.sd_beta0}, {"ase", c.ase_beta0}};
    cell["beta1"] = {{"bias", c.bias_beta1}, {"sd", c.sd_beta1}, {"ase", c.ase_beta1}};
    cell["theta0_hat"] = c.theta0_hat;
    cell["theta1_hat"] = c.theta1_hat;
    cell["rejection_rate"] = c.rejection_rate;
    cell["global_rejection_rate"] = number_or_null(c.global_rejection_rate);
    cell["n_sims"] = c.n_sims;
    cell["n_completed"] = c.n_completed;
    cell["n_failed"] = c.n_failed;
    cell["global_test_failures"] = c.global_test_failures;
    cell["root_bound_violations"] = c.root_bound_violations;
    cell["failed"] = c.failed;
    cell["failure_messages"] = c.failure_messages;
    cells.push_back(cell);
  }
  doc["cells"] = cells;
  return doc;
}

struct SimulateArgs {
  std::string config;
  std::string out = ".";
  std::string format = "csv";
};

inline int run_simulate(const SimulateArgs& args, std::ostream& log) {
  if (args.format != "json" && args.format != "csv")
    throw Error(ErrorCode::InvalidArgument, "--format must be json or csv");
  std::ifstream in(args.config);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open config file '" + args.config + "'");
  const SimConfig config = parse_sim_config(in);
  check_sim_config(config);

  std::error_code ec;
  std::filesystem::create_directories(args.out, ec);
  if (ec || !std::filesystem::is_directory(args.out))
    throw Error(ErrorCode::Io, "cannot create output directory '" + args.out + "'");

  const auto table = run_simulation(config);
  const std::filesystem::path dir(args.out);
  if (args.format == "csv") {
    detail::emit((dir / "table1.csv").string(), table1_csv(table), log);
    detail::emit((dir / "table2.csv").string(), table2_csv(table), log);
  } else {
    detail::emit((dir / "simulation.json").string(), simulation_json(table).dump(2) + "\n", log);
  }
  int status = kExitOk;
  for (const auto& c : table.cells)
    if (c.failed) {
      log << "warning: cell t0=" << format_number(c.t0) << " c=" << format_number(c.censoring_target)
          << " beta=" << format_number(c.hazard_beta) << " failed in " << c.n_failed << " of " << c.n_sims
          << " simulations\n";
      status = kExitNumerical;
    }
  return status;
}

// ---------------------------------------------------------------------------
// entry point

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Quantile regression for inactivity time of right-censored data", "inactq"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  FitArgs fit_args;
  auto* fit_cmd = app.add_subcommand("fit", "Fit the quantile model with perturbation inference");
  fit_cmd->add_option("--data", fit_args.data, "CSV file with a header row")->required();
  fit_cmd->add_option("--time", fit_args.time_col, "Observed time column")->capture_default_str();
  fit_cmd->add_option("--status", fit_args.status_col, "Event indicator column (1 event, 0 censored)")
      ->capture_default_str();
  fit_cmd->add_option("--covariates", fit_args.covariates, "Comma-separated covariate columns");
  fit_cmd->add_option("--t0", fit_args.t0, "Conditioning time point")->required();
  fit_cmd->add_option("--quantile", fit_args.quantiles, "Quantile level in (0,1); repeatable (default 0.5)")
      ->take_all();
  fit_cmd->add_option("--perturb", fit_args.perturb, "Number of perturbation replicates")->capture_default_str();
  fit_cmd->add_option("--seed", fit_args.seed, "Random seed")->capture_default_str();
  fit_cmd->add_option("--alpha", fit_args.alpha, "Significance level")->capture_default_str();
  fit_cmd->add_option("--truncate", fit_args.truncate, "Truncate censoring times at L before the KM fit");
  fit_cmd->add_option("--predict", fit_args.predict, "Comma-separated covariate values for a prediction");
  fit_cmd->add_option("--global-null", fit_args.global_null, "Comma-separated null coefficients (p+1 values)");
  fit_cmd->add_option("--format", fit_args.format, "json or csv")->capture_default_str();
  fit_cmd->add_option("--out", fit_args.out, "Output file (default stdout)");
  fit_cmd->add_option("--threads", fit_args.threads, "Worker threads, 0 = all cores")->capture_default_str();
  fit_cmd->add_option("--min-events", fit_args.min_events, "Minimum events before t0")->capture_default_str();

  SimulateArgs sim_args;
  auto* sim_cmd = app.add_subcommand("simulate", "Run the Weibull simulation grid");
  sim_cmd->add_option("--config", sim_args.config, "key = value configuration file")->required();
  sim_cmd->add_option("--out", sim_args.out, "Output directory")->capture_default_str();
  sim_cmd->add_option("--format", sim_args.format, "csv or json")->capture_default_str();

  KmArgs km_args;
  auto* km_cmd = app.add_subcommand("km", "Censoring Kaplan-Meier curve as CSV");
  km_cmd->add_option("--data", km_args.data, "CSV file with a header row")->required();
  km_cmd->add_option("--time", km_args.time_col, "Observed time column")->capture_default_str();
  km_cmd->add_option("--status", km_args.status_col, "Event indicator column")->capture_default_str();
  km_cmd->add_option("--truncate", km_args.truncate, "Truncate censoring times at L");
  km_cmd->add_option("--out", km_args.out, "Output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, er;
    const int code = app.exit(e, o, er);
    out << o.str();
    err << er.str();
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*fit_cmd) return run_fit(fit_args, out);
    if (*sim_cmd) return run_simulate(sim_args, err);
    if (*km_cmd) return run_km(km_args, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitUsage;
}

}  // namespace inactivity::cli
