#include "nphmm/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "nphmm/errors.hpp"
#include "nphmm/estimation.hpp"
#include "nphmm/inference.hpp"
#include "nphmm/io.hpp"
#include "nphmm/parallel.hpp"
#include "nphmm/rng.hpp"
#include "nphmm/smoothing.hpp"

namespace nphmm {

using nlohmann::json;

std::string_view to_string(Estimator estimator) {
  switch (estimator) {
    case Estimator::ParametricPoisson: return "parametric-poisson";
    case Estimator::NonparamUnpenalized: return "nonparam-unpenalized";
    case Estimator::NonparamPenalized: return "nonparam-penalized";
    case Estimator::TrueParametricOracle: return "true-parametric-oracle";
  }
  return "unknown";
}

Estimator parse_estimator(std::string_view name) {
  if (name == "parametric-poisson" || name == "1b") return Estimator::ParametricPoisson;
  if (name == "nonparam-unpenalized" || name == "2a") return Estimator::NonparamUnpenalized;
  if (name == "nonparam-penalized" || name == "2b") return Estimator::NonparamPenalized;
  if (name == "true-parametric-oracle" || name == "1a") return Estimator::TrueParametricOracle;
  throw ConfigError("unknown estimator '" + std::string(name) + "'");
}

void ExperimentSpec::validate() const {
  truth.validate();
  if (length < 2) throw ConfigError("experiment length must be at least 2");
  if (n_runs < 1) throw ConfigError("experiment needs at least one run");
  if (estimators.empty()) throw ConfigError("experiment lists no estimators");
  if (states != 0 && states != truth.states()) {
    throw ConfigError("fitted state count must equal the true state count");
  }
  if (order < 1) throw ConfigError("difference order must be at least 1");
  if (lambda && static_cast<int>(lambda->size()) != truth.states()) {
    throw ConfigError("fixed lambda needs one value per state");
  }
  if (n_starts < 1) throw ConfigError("starts must be at least 1");
  std::vector<std::uint64_t> seeds;
  for (int r = 0; r < n_runs; ++r) seeds.push_back(run_seed(r));
  std::sort(seeds.begin(), seeds.end());
  if (std::adjacent_find(seeds.begin(), seeds.end()) != seeds.end()) throw ConfigError("run seeds collide");
}

std::uint64_t ExperimentSpec::run_seed(int run) const {
  return derive_seed(seed, static_cast<std::uint64_t>(run));
}

namespace {

Eigen::MatrixXd normalized_rows(const json& j, const char* name) {
  if (!j.is_array() || j.empty()) throw ConfigError(std::string("'") + name + "' must be a non-empty array");
  const auto cols = j.at(0).size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (j[r].size() != cols) throw ConfigError(std::string("'") + name + "' is not rectangular");
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = j[r][c].get<double>();
      if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(std::string("'") + name + "' has a negative entry");
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
    }
    const double sum = m.row(static_cast<Eigen::Index>(r)).sum();
    if (!(sum > 0.0)) throw ConfigError(std::string("'") + name + "' has an all-zero row");
    m.row(static_cast<Eigen::Index>(r)) /= sum;
  }
  return m;
}

Eigen::MatrixXd pad_columns(const Eigen::MatrixXd& m, Eigen::Index cols) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m.rows(), cols);
  out.leftCols(m.cols()) = m;
  return out;
}

}  // namespace

ExperimentSpec parse_experiment_spec(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("experiment spec is not valid JSON: ") + e.what());
  }
  try {
    ExperimentSpec spec;
    const json& truth = j.at("truth");
    spec.truth.gamma = normalized_rows(truth.at("gamma"), "truth.gamma");
    spec.truth.pmfs = normalized_rows(truth.at("pmfs"), "truth.pmfs");
    spec.truth.stationary = !truth.contains("delta");
    if (truth.contains("delta")) {
      spec.truth.delta = normalized_rows(json::array({truth.at("delta")}), "truth.delta").row(0).transpose();
    } else {
      spec.truth.delta = stationary_distribution(spec.truth.gamma);
    }
    spec.length = j.value("length", std::size_t{500});
    spec.n_runs = j.value("runs", 10);
    for (const auto& e : j.at("estimators")) spec.estimators.push_back(parse_estimator(e.get<std::string>()));
    spec.states = j.value("states", 0);
    spec.order = j.value("order", 3);
    if (j.contains("grid")) {
      const json& g = j.at("grid");
      spec.grid_lo = g.value("lo", spec.grid_lo);
      spec.grid_hi = g.value("hi", spec.grid_hi);
      spec.grid_step = g.value("step", spec.grid_step);
    }
    spec.folds = j.value("folds", 20);
    spec.min_support = j.value("min_support", 40);
    if (j.contains("lambda")) spec.lambda = j.at("lambda").get<std::vector<double>>();
    const auto exempt = j.value("inflation_exempt", std::vector<int>{});
    spec.inflation_exempt = std::set<int>(exempt.begin(), exempt.end());
    spec.n_starts = j.value("starts", 5);
    spec.seed = j.value("seed", std::uint64_t{1});
    spec.threads = j.value("threads", 0);
    spec.validate();
    return spec;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed experiment spec: ") + e.what());
  }
}

RunRecord evaluate_estimator(const ExperimentSpec& spec, Estimator estimator, int run, const Simulation& sim) {
  const HmmParams& truth = spec.truth;
  const int n = truth.states();
  const int true_k = truth.support_bound();
  const int fit_k = std::max(spec.min_support, sim.counts.max_observed());

  RunRecord rec;
  rec.run = run;
  rec.seed = spec.run_seed(run);
  rec.estimator = estimator;

  FitConfig config;
  config.n_starts = spec.n_starts;
  config.seed = derive_seed(rec.seed, 17);
  config.stationary = true;

  FitResult fitted;
  CountSeries data = sim.counts.with_support(fit_k);
  switch (estimator) {
    case Estimator::ParametricPoisson:
      fitted = fit_poisson(data, n, config);
      break;
    case Estimator::NonparamUnpenalized:
      fitted = fit(data, n, config, PenaltyConfig::unpenalized(n, std::min(spec.order, fit_k)));
      break;
    case Estimator::NonparamPenalized: {
      std::vector<double> lambdas;
      if (spec.lambda) {
        lambdas = *spec.lambda;
      } else {
        const CvGrid grid = CvGrid::log10_range(spec.grid_lo, spec.grid_hi, spec.grid_step, n);
        const FoldPlan folds = make_folds(data.size(), spec.folds, derive_seed(rec.seed, 29));
        CvOptions options;
        options.order = spec.order;
        options.inflation_exempt = spec.inflation_exempt;
        options.fit = config;
        options.threads = 1;
        lambdas = greedy_search(grid, data, n, folds, options).best_lambda;
      }
      fitted = fit(data, n, config, PenaltyConfig{spec.order, lambdas, spec.inflation_exempt});
      rec.lambda = fitted.lambdas;
      break;
    }
    case Estimator::TrueParametricOracle:
      data = sim.counts.with_support(true_k);
      fitted = fit_fixed_pmfs(data, truth.pmfs, config);
      break;
  }
  rec.loglik = fitted.loglik;

  const Eigen::Index width = std::max<Eigen::Index>(truth.pmfs.cols(), fitted.params.pmfs.cols());
  const Eigen::MatrixXd true_pmfs = pad_columns(truth.pmfs, width);
  const Eigen::MatrixXd est_pmfs = pad_columns(fitted.params.pmfs, width);

  // Match fitted states to true states by minimal total KLD.
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best_perm = perm;
  double best_total = std::numeric_limits<double>::infinity();
  do {
    Eigen::MatrixXd permuted(n, width);
    for (int a = 0; a < n; ++a) permuted.row(a) = est_pmfs.row(perm[static_cast<std::size_t>(a)]);
    const double total = kld(true_pmfs, permuted).sum();
    if (total < best_total) {
      best_total = total;
      best_perm = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  const HmmParams aligned = permute_states(fitted.params, best_perm);
  Eigen::MatrixXd aligned_pmfs(n, width);
  for (int a = 0; a < n; ++a) aligned_pmfs.row(a) = est_pmfs.row(best_perm[static_cast<std::size_t>(a)]);
  rec.kld = kld(true_pmfs, aligned_pmfs);
  rec.abs_error = transition_mae(aligned.gamma, truth.gamma);
  if (!rec.lambda.empty()) {
    std::vector<double> l(rec.lambda.size());
    for (int a = 0; a < n; ++a) l[static_cast<std::size_t>(a)] = rec.lambda[static_cast<std::size_t>(best_perm[static_cast<std::size_t>(a)])];
    rec.lambda = std::move(l);
  }

  const DecodeResult decoded = viterbi(fitted.params, data);
  rec.smr = misclassification_rate(decoded.states, sim.states, n);
  return rec;
}

std::vector<AggregateRecord> aggregate(std::span<const RunRecord> runs, std::span<const Estimator> estimators) {
  std::vector<AggregateRecord> out;
  for (Estimator e : estimators) {
    AggregateRecord agg;
    agg.estimator = e;
    for (const RunRecord& r : runs) {
      if (r.estimator != e) continue;
      if (agg.runs == 0) {
        agg.mean_kld = Eigen::VectorXd::Zero(r.kld.size());
        agg.mean_abs_error = Eigen::MatrixXd::Zero(r.abs_error.rows(), r.abs_error.cols());
      }
      agg.mean_kld += r.kld;
      agg.mean_abs_error += r.abs_error;
      agg.mean_smr += r.smr;
      ++agg.runs;
    }
    if (agg.runs > 0) {
      agg.mean_kld /= agg.runs;
      agg.mean_abs_error /= agg.runs;
      agg.mean_smr /= agg.runs;
    }
    out.push_back(std::move(agg));
  }
  return out;
}

ExperimentReport run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  const std::size_t n_est = spec.estimators.size();
  ExperimentReport report;
  report.runs.resize(static_cast<std::size_t>(spec.n_runs) * n_est);
  parallel_for(static_cast<std::size_t>(spec.n_runs), spec.threads, [&](std::size_t r) {
    const int run = static_cast<int>(r);
    const Simulation sim = simulate(spec.truth, spec.length, spec.run_seed(run));
    for (std::size_t e = 0; e < n_est; ++e)
      report.runs[r * n_est + e] = evaluate_estimator(spec, spec.estimators[e], run, sim);
  });
  report.aggregates = aggregate(report.runs, spec.estimators);
  return report;
}

std::string format_runs(const ExperimentReport& report) {
  std::ostringstream out;
  if (report.runs.empty()) return "";
  const auto n = report.runs.front().kld.size();
  out << "run\tseed\testimator";
  for (Eigen::Index i = 0; i < n; ++i) out << "\tkld_" << i + 1;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j) out << "\tmae_" << i + 1 << j + 1;
  out << "\tsmr";
  for (Eigen::Index i = 0; i < n; ++i) out << "\tlambda_" << i + 1;
  out << "\tloglik\n";
  for (const RunRecord& r : report.runs) {
    out << r.run + 1 << '\t' << r.seed << '\t' << to_string(r.estimator);
    for (Eigen::Index i = 0; i < n; ++i) out << '\t' << format_number(r.kld(i));
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (i != j) out << '\t' << format_number(r.abs_error(i, j));
    out << '\t' << format_number(r.smr);
    for (Eigen::Index i = 0; i < n; ++i)
      out << '\t' << (r.lambda.empty() ? std::string("NA") : format_number(r.lambda[static_cast<std::size_t>(i)]));
    out << '\t' << format_number(r.loglik) << '\n';
  }
  return out.str();
}

std::string format_aggregates(const ExperimentReport& report) {
  std::ostringstream out;
  if (report.aggregates.empty() || report.aggregates.front().runs == 0) return "";
  const auto n = report.aggregates.front().mean_kld.size();
  out << "estimator\truns";
  for (Eigen::Index i = 0; i < n; ++i) out << "\tmean_kld_" << i + 1;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j) out << "\tmean_mae_" << i + 1 << j + 1;
  out << "\tmean_smr\n";
  for (const AggregateRecord& a : report.aggregates) {
    out << to_string(a.estimator) << '\t' << a.runs;
    for (Eigen::Index i = 0; i < n; ++i) out << '\t' << format_number(a.mean_kld(i));
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (i != j) out << '\t' << format_number(a.mean_abs_error(i, j));
    out << '\t' << format_number(a.mean_smr) << '\n';
  }
  return out.str();
}

}  // namespace nphmm
