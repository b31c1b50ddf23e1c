#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "nphmm/estimation.hpp"
#include "nphmm/model.hpp"

namespace nphmm {

// One candidate axis shared by every state; the search space is axis^dimension.
struct CvGrid {
  std::vector<double> axis;
  int dimension = 1;

  void validate() const;
  // 10^lo, 10^(lo+step), ..., 10^hi
  static CvGrid log10_range(double lo, double hi, double step, int dimension);
  // Midpoint index (axis.size() - 1) / 2 in every coordinate.
  std::vector<int> midpoint() const;
  std::vector<double> values(std::span<const int> index) const;
};

struct FoldPlan {
  int n_folds = 20;
  std::vector<std::vector<std::size_t>> held_out;  // sorted indices per fold
  std::uint64_t seed = 0;
};

// Random partition of {0..T-1} into n_folds parts of near-equal size.
FoldPlan make_folds(std::size_t length, int n_folds, std::uint64_t seed);

struct CvStep {
  std::vector<int> index;
  std::vector<double> lambda;
  double score = 0.0;
};

struct CvResult {
  std::vector<int> best_index;
  std::vector<double> best_lambda;
  double best_score = 0.0;
  std::vector<CvStep> path;       // accepted vectors, starting point first
  std::vector<CvStep> evaluated;  // every scored vector, in scoring order
  std::vector<double> per_fold_logliks;
};

// Greedy axis-neighbour ascent on an index grid of size axis_size^dimension.
// score is called at most once per index vector. Exact ties keep the current
// vector; among equally good improving neighbours the larger-lambda move wins.
CvResult greedy_grid_search(int axis_size, int dimension, std::vector<int> start,
                            const std::function<double(const std::vector<int>&)>& score);

struct CvOptions {
  int order = 3;
  std::set<int> inflation_exempt;
  FitConfig fit;
  std::optional<std::vector<int>> start;  // grid midpoint when empty
  int threads = 0;                        // 0: hardware concurrency
};

// Held-out log-likelihood of one fold: train with the fold marked missing,
// then score the fold alone with the trained parameters. warm, if given, is
// tried first and the standard multi-start is only used if it fails. The
// trained working parameters are written to trained when non-null.
double oos_loglik(std::span<const double> lambdas, const CountSeries& data,
                  std::span<const std::size_t> fold, int states, int order,
                  const FitConfig& config, const std::set<int>& inflation_exempt = {},
                  const UnconstrainedParams* warm = nullptr,
                  UnconstrainedParams* trained = nullptr);

// K-fold cross-validated greedy search over grid. The score of a vector is the
// mean held-out log-likelihood over folds, or -inf if any fold fails to train.
CvResult greedy_search(const CvGrid& grid, const CountSeries& data, int states,
                       const FoldPlan& folds, const CvOptions& options);

}  // namespace nphmm
