#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nphmm/errors.hpp"
#include "nphmm/estimation.hpp"
#include "nphmm/experiment.hpp"
#include "nphmm/inference.hpp"
#include "nphmm/io.hpp"
#include "nphmm/smoothing.hpp"

namespace {

using namespace nphmm;

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct ModelOptions {
  int states = 2;
  int order = 3;
  std::string lambda = "0";
  std::string grid = "1:10:1";
  int folds = 20;
  std::optional<int> support;
  bool stationary = true;
  int starts = 10;
  std::uint64_t seed = 1;
  std::string inflation_exempt;
  int threads = 0;
};

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::stringstream in(text);
  std::string part;
  while (std::getline(in, part, sep)) parts.push_back(part);
  return parts;
}

double to_double(const std::string& token, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(token, &used);
    if (used != token.size()) throw std::invalid_argument(token);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("invalid " + what + ": '" + token + "'");
  }
}

int to_int(const std::string& token, const std::string& what) {
  const double v = to_double(token, what);
  if (v != std::floor(v) || std::abs(v) > 1e9) throw ConfigError("invalid " + what + ": '" + token + "'");
  return static_cast<int>(v);
}

std::vector<double> parse_lambdas(const std::string& text, int states) {
  std::vector<double> lambdas;
  for (const auto& token : split(text, ',')) lambdas.push_back(to_double(token, "--lambda value"));
  if (lambdas.size() == 1) lambdas.assign(static_cast<std::size_t>(states), lambdas.front());
  if (static_cast<int>(lambdas.size()) != states) {
    throw ConfigError("--lambda needs one value or one per state");
  }
  return lambdas;
}

std::set<int> parse_exempt(const std::string& text) {
  std::set<int> exempt;
  if (text.empty()) return exempt;
  for (const auto& token : split(text, ',')) exempt.insert(to_int(token, "--inflation-exempt count"));
  return exempt;
}

CvGrid parse_grid(const std::string& text, int states) {
  const auto parts = split(text, ':');
  if (parts.size() != 3) throw ConfigError("--grid must look like lo:hi:step (log10 units)");
  return CvGrid::log10_range(to_double(parts[0], "grid bound"), to_double(parts[1], "grid bound"),
                             to_double(parts[2], "grid step"), states);
}

FitConfig fit_config(const ModelOptions& o) {
  FitConfig config;
  config.n_starts = o.starts;
  config.stationary = o.stationary;
  config.seed = o.seed;
  return config;
}

// Writes to path, or to stdout when path is empty.
void emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << text;
  if (!out) throw ConfigError("failed writing " + path);
}

std::string join_lambdas(const std::vector<double>& lambdas) {
  std::string s;
  for (std::size_t i = 0; i < lambdas.size(); ++i) s += (i ? "\t" : "") + format_number(lambdas[i]);
  return s;
}

std::string cv_table(const CvResult& result, int states) {
  std::ostringstream out;
  out << "kind\tstep";
  for (int i = 1; i <= states; ++i) out << "\tlambda_" << i;
  out << "\tscore\n";
  for (std::size_t s = 0; s < result.evaluated.size(); ++s) {
    out << "evaluated\t" << s + 1 << '\t' << join_lambdas(result.evaluated[s].lambda) << '\t'
        << format_number(result.evaluated[s].score) << '\n';
  }
  for (std::size_t s = 0; s < result.path.size(); ++s) {
    out << "path\t" << s + 1 << '\t' << join_lambdas(result.path[s].lambda) << '\t'
        << format_number(result.path[s].score) << '\n';
  }
  out << "selected\t" << result.path.size() << '\t' << join_lambdas(result.best_lambda) << '\t'
      << format_number(result.best_score) << '\n';
  return out.str();
}

CvResult run_cv(const CountSeries& data, const ModelOptions& o) {
  CvOptions options;
  options.order = o.order;
  options.inflation_exempt = parse_exempt(o.inflation_exempt);
  options.fit = fit_config(o);
  options.threads = o.threads;
  const CvGrid grid = parse_grid(o.grid, o.states);
  const FoldPlan folds = make_folds(data.size(), o.folds, o.seed);
  return greedy_search(grid, data, o.states, folds, options);
}

void add_model_options(CLI::App* cmd, ModelOptions& o, bool with_lambda) {
  cmd->add_option("--states", o.states, "Number of hidden states")->check(CLI::PositiveNumber);
  cmd->add_option("--order", o.order, "Difference order m of the roughness penalty")->check(CLI::PositiveNumber);
  if (with_lambda) cmd->add_option("--lambda", o.lambda, "Smoothing parameters: one value, one per state, or 'cv'");
  cmd->add_option("--grid", o.grid, "CV grid as lo:hi:step in log10 units");
  cmd->add_option("--folds", o.folds, "Number of CV folds");
  cmd->add_option("--support", o.support, "Support bound K (default: max + max(5, ceil(0.1 max)))");
  cmd->add_flag("--stationary,!--no-stationary", o.stationary, "Initial distribution is the stationary one");
  cmd->add_option("--starts", o.starts, "Number of optimizer start points");
  cmd->add_option("--seed", o.seed, "Random seed");
  cmd->add_option("--inflation-exempt", o.inflation_exempt, "Comma list of counts exempt from the penalty");
  cmd->add_option("--threads", o.threads, "Worker threads for CV (0: all cores)");
}

int cmd_fit(const std::string& data_path, const ModelOptions& o, const std::string& out_path,
            const std::string& cv_out) {
  const CountSeries data = load_counts(data_path, o.support);
  PenaltyConfig penalty;
  penalty.order = o.order;
  penalty.inflation_exempt = parse_exempt(o.inflation_exempt);
  if (o.lambda == "cv") {
    const CvResult cv = run_cv(data, o);
    if (!cv_out.empty()) emit(cv_out, cv_table(cv, o.states));
    penalty.lambdas = cv.best_lambda;
  } else {
    penalty.lambdas = parse_lambdas(o.lambda, o.states);
  }
  const FitResult r = fit(data, o.states, fit_config(o), penalty);
  ModelFile model;
  model.params = r.params;
  model.penalty = penalty;
  model.penalty.lambdas = r.lambdas;
  model.fit = FitMetadata{r.loglik, r.penalized_loglik, r.seed, r.converged};
  emit(out_path, serialize_model(model));
  return 0;
}

int cmd_cv(const std::string& data_path, const ModelOptions& o, const std::string& out_path) {
  const CountSeries data = load_counts(data_path, o.support);
  emit(out_path, cv_table(run_cv(data, o), o.states));
  return 0;
}

// Data read against the model's support bound.
CountSeries data_for(const std::string& data_path, const ModelFile& model) {
  return load_counts(data_path, model.params.support_bound());
}

int cmd_decode(const std::string& model_path, const std::string& data_path, const std::string& out_path) {
  const ModelFile model = load_model(model_path);
  const CountSeries data = data_for(data_path, model);
  const DecodeResult path = viterbi(model.params, data);
  const Eigen::MatrixXd post = state_posteriors(model.params, data);
  std::ostringstream out;
  out << "t\tcount\tstate";
  for (int i = 1; i <= model.params.states(); ++i) out << "\tposterior_" << i;
  out << '\n';
  for (std::size_t t = 0; t < data.size(); ++t) {
    out << t + 1 << '\t' << (data.missing(t) ? std::string("NA") : std::to_string(data[t])) << '\t'
        << path.states[t] + 1;
    for (Eigen::Index i = 0; i < post.cols(); ++i) out << '\t' << format_number(post(static_cast<Eigen::Index>(t), i));
    out << '\n';
  }
  emit(out_path, out.str());
  return 0;
}

int cmd_residuals(const std::string& model_path, const std::string& data_path, const std::string& out_path,
                  const std::string& acf_out, int max_lag) {
  const ModelFile model = load_model(model_path);
  const CountSeries data = data_for(data_path, model);
  const PseudoResiduals r = pseudo_residuals(model.params, data);
  std::ostringstream out;
  out << "t\tcount\tlower\tupper\tmid\n";
  for (std::size_t t = 0; t < data.size(); ++t) {
    const auto i = static_cast<Eigen::Index>(t);
    out << t + 1 << '\t' << data[t] << '\t' << format_number(r.lower(i)) << '\t' << format_number(r.upper(i))
        << '\t' << format_number(r.mid(i)) << '\n';
  }
  emit(out_path, out.str());
  if (!acf_out.empty()) {
    const std::vector<double> mids(r.mid.data(), r.mid.data() + r.mid.size());
    const std::vector<double> acf = autocorrelation(mids, max_lag);
    std::ostringstream table;
    table << "lag\tacf\n";
    for (std::size_t lag = 0; lag < acf.size(); ++lag) table << lag << '\t' << format_number(acf[lag]) << '\n';
    emit(acf_out, table.str());
  }
  return 0;
}

int cmd_simulate(const std::string& model_path, std::size_t length, std::uint64_t seed,
                 const std::string& out_path, const std::string& states_out) {
  const ModelFile model = load_model(model_path);
  const Simulation sim = simulate(model.params, length, seed);
  std::ostringstream counts;
  if (states_out.empty() && out_path.empty()) {
    counts << "t\tstate\tcount\n";
    for (std::size_t t = 0; t < length; ++t) counts << t + 1 << '\t' << sim.states[t] + 1 << '\t' << sim.counts[t] << '\n';
    emit("", counts.str());
    return 0;
  }
  counts << "count\n";
  for (int y : sim.counts.values()) counts << y << '\n';
  emit(out_path, counts.str());
  if (!states_out.empty()) {
    std::ostringstream states;
    states << "t\tstate\n";
    for (std::size_t t = 0; t < length; ++t) states << t + 1 << '\t' << sim.states[t] + 1 << '\n';
    emit(states_out, states.str());
  }
  return 0;
}

int cmd_experiment(const std::string& spec_path, std::optional<int> threads, std::optional<std::uint64_t> seed,
                   const std::string& out_path, const std::string& aggregate_out) {
  ExperimentSpec spec = parse_experiment_spec(read_file(spec_path));
  if (threads) spec.threads = *threads;
  if (seed) spec.seed = *seed;
  const ExperimentReport report = run_experiment(spec);
  emit(out_path, format_runs(report));
  if (!aggregate_out.empty()) {
    emit(aggregate_out, format_aggregates(report));
  } else if (!out_path.empty()) {
    emit("", format_aggregates(report));
  }
  return 0;
}

void report_error(const std::string& kind, const std::string& message, std::optional<std::size_t> line = std::nullopt) {
  nlohmann::ordered_json record;
  record["error"] = kind;
  record["message"] = message;
  if (line) record["line"] = *line;
  std::cerr << record.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nonparametric hidden Markov models for count time series"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  ModelOptions model_options;
  std::string data_path, model_path, out_path, cv_out, acf_out, states_out, aggregate_out, spec_path;
  int max_lag = 20;
  std::size_t length = 500;
  std::uint64_t sim_seed = 1;
  std::optional<int> exp_threads;
  std::optional<std::uint64_t> exp_seed;

  auto* fit_cmd = app.add_subcommand("fit", "Fit a penalized nonparametric HMM and write the model file");
  add_model_options(fit_cmd, model_options, true);
  fit_cmd->add_option("--out", out_path, "Model file (default: stdout)");
  fit_cmd->add_option("--cv-out", cv_out, "Cross-validation table when --lambda cv");
  fit_cmd->add_option("data", data_path, "Count series")->required();

  auto* cv_cmd = app.add_subcommand("cv", "Select smoothing parameters by greedy cross-validation");
  add_model_options(cv_cmd, model_options, false);
  cv_cmd->add_option("--out", out_path, "CV table (default: stdout)");
  cv_cmd->add_option("data", data_path, "Count series")->required();

  auto* decode_cmd = app.add_subcommand("decode", "Viterbi path and state posteriors");
  decode_cmd->add_option("--model", model_path, "Model file")->required();
  decode_cmd->add_option("--out", out_path, "Output table (default: stdout)");
  decode_cmd->add_option("data", data_path, "Count series")->required();

  auto* resid_cmd = app.add_subcommand("residuals", "Normal pseudo-residuals and their autocorrelation");
  resid_cmd->add_option("--model", model_path, "Model file")->required();
  resid_cmd->add_option("--out", out_path, "Residual table (default: stdout)");
  resid_cmd->add_option("--acf-out", acf_out, "Autocorrelation table of the midpoint residuals");
  resid_cmd->add_option("--max-lag", max_lag, "Largest ACF lag")->check(CLI::NonNegativeNumber);
  resid_cmd->add_option("data", data_path, "Count series")->required();

  auto* sim_cmd = app.add_subcommand("simulate", "Simulate counts and states from a model file");
  sim_cmd->add_option("--model", model_path, "Model file")->required();
  sim_cmd->add_option("--length", length, "Series length")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--seed", sim_seed, "Random seed");
  sim_cmd->add_option("--out", out_path, "Counts file (one column with header)");
  sim_cmd->add_option("--states-out", states_out, "State sequence table");

  auto* exp_cmd = app.add_subcommand("experiment", "Run a simulation study described by a JSON spec");
  exp_cmd->add_option("--out", out_path, "Per-run table (default: stdout)");
  exp_cmd->add_option("--aggregate-out", aggregate_out, "Aggregate table");
  exp_cmd->add_option("--threads", exp_threads, "Worker threads (0: all cores)");
  exp_cmd->add_option("--seed", exp_seed, "Override the spec's base seed");
  exp_cmd->add_option("spec", spec_path, "Experiment spec (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("config", e.what());
    return kExitConfig;
  }

  try {
    if (*fit_cmd) return cmd_fit(data_path, model_options, out_path, cv_out);
    if (*cv_cmd) return cmd_cv(data_path, model_options, out_path);
    if (*decode_cmd) return cmd_decode(model_path, data_path, out_path);
    if (*resid_cmd) return cmd_residuals(model_path, data_path, out_path, acf_out, max_lag);
    if (*sim_cmd) return cmd_simulate(model_path, length, sim_seed, out_path, states_out);
    if (*exp_cmd) return cmd_experiment(spec_path, exp_threads, exp_seed, out_path, aggregate_out);
  } catch (const ParseError& e) {
    report_error("parse", e.what(), e.line());
    return kExitConfig;
  } catch (const ConfigError& e) {
    report_error("config", e.what());
    return kExitConfig;
  } catch (const NumericalError& e) {
    report_error("numerical", e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    report_error("internal", e.what());
    return 1;
  }
  return 0;
}
