#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "nphmm/model.hpp"

namespace nphmm {

enum class Estimator {
  ParametricPoisson,
  NonparamUnpenalized,
  NonparamPenalized,
  TrueParametricOracle,
};

std::string_view to_string(Estimator estimator);
// Accepts the long names and the short codes 1a, 1b, 2a, 2b.
Estimator parse_estimator(std::string_view name);

// Monte-Carlo comparison of estimators on data simulated from a known model.
struct ExperimentSpec {
  HmmParams truth;
  std::size_t length = 500;
  int n_runs = 10;
  std::vector<Estimator> estimators;
  int states = 0;  // fitted states; defaults to truth.states()
  int order = 3;
  double grid_lo = 1.0;
  double grid_hi = 6.0;
  double grid_step = 1.0;
  int folds = 20;
  int min_support = 40;
  std::optional<std::vector<double>> lambda;  // skips cross-validation when set
  std::set<int> inflation_exempt;
  int n_starts = 5;
  std::uint64_t seed = 1;
  int threads = 0;

  void validate() const;
  std::uint64_t run_seed(int run) const;
};

ExperimentSpec parse_experiment_spec(std::string_view json_text);

struct RunRecord {
  int run = 0;
  std::uint64_t seed = 0;
  Estimator estimator = Estimator::NonparamPenalized;
  Eigen::VectorXd kld;        // per true state
  Eigen::MatrixXd abs_error;  // |gamma_hat - gamma| off-diagonal
  double smr = 0.0;
  std::vector<double> lambda;
  double loglik = 0.0;
};

struct AggregateRecord {
  Estimator estimator = Estimator::NonparamPenalized;
  int runs = 0;
  Eigen::VectorXd mean_kld;
  Eigen::MatrixXd mean_abs_error;
  double mean_smr = 0.0;
};

struct ExperimentReport {
  std::vector<RunRecord> runs;  // ordered by (run, estimator list position)
  std::vector<AggregateRecord> aggregates;
};

// Fits one estimator to one simulated data set and scores it against truth.
// The fitted model's states are matched to the true states by the
// permutation minimizing total KLD before scoring.
RunRecord evaluate_estimator(const ExperimentSpec& spec, Estimator estimator, int run,
                             const Simulation& sim);

ExperimentReport run_experiment(const ExperimentSpec& spec);

std::vector<AggregateRecord> aggregate(std::span<const RunRecord> runs,
                                       std::span<const Estimator> estimators);

// Tidy TSV renderings.
std::string format_runs(const ExperimentReport& report);
std::string format_aggregates(const ExperimentReport& report);

}  // namespace nphmm
