#include "nphmm/smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "nphmm/errors.hpp"
#include "nphmm/parallel.hpp"
#include "nphmm/rng.hpp"

namespace nphmm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

}  // namespace

void CvGrid::validate() const {
  if (axis.empty()) throw ConfigError("smoothing grid axis is empty");
  if (dimension < 1) throw ConfigError("smoothing grid dimension must be at least 1");
  for (std::size_t i = 0; i < axis.size(); ++i) {
    if (!std::isfinite(axis[i]) || axis[i] < 0.0) throw ConfigError("grid values must be finite and >= 0");
    if (i > 0 && !(axis[i] > axis[i - 1])) throw ConfigError("grid axis must be strictly increasing");
  }
}

CvGrid CvGrid::log10_range(double lo, double hi, double step, int dimension) {
  if (!(step > 0.0) || hi < lo) throw ConfigError("grid range must satisfy lo <= hi and step > 0");
  CvGrid grid;
  grid.dimension = dimension;
  const int count = static_cast<int>(std::floor((hi - lo) / step + 1e-9)) + 1;
  for (int i = 0; i < count; ++i) grid.axis.push_back(std::pow(10.0, lo + i * step));
  grid.validate();
  return grid;
}

std::vector<int> CvGrid::midpoint() const {
  return std::vector<int>(static_cast<std::size_t>(dimension), static_cast<int>(axis.size() - 1) / 2);
}

std::vector<double> CvGrid::values(std::span<const int> index) const {
  std::vector<double> out;
  out.reserve(index.size());
  for (int i : index) out.push_back(axis.at(static_cast<std::size_t>(i)));
  return out;
}

FoldPlan make_folds(std::size_t length, int n_folds, std::uint64_t seed) {
  if (n_folds < 2) throw ConfigError("at least two folds are required");
  if (length < static_cast<std::size_t>(n_folds)) throw ConfigError("more folds than observations");
  std::vector<std::size_t> perm(length);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = length - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);

  FoldPlan plan;
  plan.n_folds = n_folds;
  plan.seed = seed;
  plan.held_out.resize(static_cast<std::size_t>(n_folds));
  for (std::size_t p = 0; p < length; ++p) plan.held_out[p % static_cast<std::size_t>(n_folds)].push_back(perm[p]);
  for (auto& fold : plan.held_out) std::sort(fold.begin(), fold.end());
  return plan;
}

CvResult greedy_grid_search(int axis_size, int dimension, std::vector<int> start,
                            const std::function<double(const std::vector<int>&)>& score) {
  if (static_cast<int>(start.size()) != dimension) throw ConfigError("start vector has the wrong dimension");
  for (int i : start)
    if (i < 0 || i >= axis_size) throw ConfigError("start vector lies off the grid");

  std::map<std::vector<int>, double> cache;
  CvResult result;
  auto evaluate = [&](const std::vector<int>& index) {
    if (auto it = cache.find(index); it != cache.end()) return it->second;
    const double s = score(index);
    cache.emplace(index, s);
    result.evaluated.push_back({index, {}, s});
    return s;
  };

  std::vector<int> current = std::move(start);
  double current_score = evaluate(current);
  result.path.push_back({current, {}, current_score});
  for (;;) {
    std::vector<int> best = current;
    double best_score = current_score;
    bool best_is_up = false;
    for (int d = 0; d < dimension; ++d) {
      for (int step : {-1, 1}) {
        std::vector<int> neighbour = current;
        neighbour[static_cast<std::size_t>(d)] += step;
        const int v = neighbour[static_cast<std::size_t>(d)];
        if (v < 0 || v >= axis_size) continue;
        const double s = evaluate(neighbour);
        const bool improving_tie = s == best_score && best != current && step > 0 && !best_is_up;
        if (s > best_score || improving_tie) {
          best = neighbour;
          best_score = s;
          best_is_up = step > 0;
        }
      }
    }
    if (best == current) break;
    current = std::move(best);
    current_score = best_score;
    result.path.push_back({current, {}, current_score});
  }
  result.best_index = current;
  result.best_score = current_score;
  return result;
}

double oos_loglik(std::span<const double> lambdas, const CountSeries& data,
                  std::span<const std::size_t> fold, int states, int order, const FitConfig& config,
                  const std::set<int>& inflation_exempt, const UnconstrainedParams* warm,
                  UnconstrainedParams* trained) {
  if (fold.empty()) return 0.0;
  const CountSeries train = data.with_missing(fold);
  const PenaltyConfig penalty{order, std::vector<double>(lambdas.begin(), lambdas.end()), inflation_exempt};

  FitResult result;
  bool have = false;
  if (warm) {
    try {
      result = fit_from(train, std::span<const UnconstrainedParams>(warm, 1), config, penalty);
      have = true;
    } catch (const FitError&) {
    }
  }
  if (!have) result = fit(train, states, config, penalty);
  if (trained) *trained = result.working;
  return forward_loglik(result.params, data.keep_only(fold));
}

CvResult greedy_search(const CvGrid& grid, const CountSeries& data, int states,
                       const FoldPlan& folds, const CvOptions& options) {
  grid.validate();
  if (grid.dimension != states) throw ConfigError("grid dimension must equal the number of states");
  if (folds.held_out.empty()) throw ConfigError("fold plan is empty");

  struct Entry {
    double score = kNegInf;
    std::vector<double> per_fold;
    std::vector<UnconstrainedParams> trained;
    std::vector<bool> ok;
  };
  std::map<std::vector<int>, Entry> entries;

  // Warm-start source: the best already-scored vector adjacent to index.
  auto warm_source = [&](const std::vector<int>& index) -> const Entry* {
    const Entry* source = nullptr;
    for (const auto& [other, entry] : entries) {
      int distance = 0;
      for (std::size_t d = 0; d < index.size(); ++d) distance += std::abs(other[d] - index[d]);
      if (distance == 1 && std::isfinite(entry.score) && (!source || entry.score > source->score)) {
        source = &entry;
      }
    }
    return source;
  };

  auto score = [&](const std::vector<int>& index) {
    const std::vector<double> lambdas = grid.values(index);
    const Entry* source = warm_source(index);
    const std::size_t n_folds = folds.held_out.size();
    Entry entry;
    entry.per_fold.assign(n_folds, kNegInf);
    entry.trained.resize(n_folds);
    entry.ok.assign(n_folds, false);
    parallel_for(n_folds, options.threads, [&](std::size_t f) {
      const UnconstrainedParams* warm = (source && source->ok[f]) ? &source->trained[f] : nullptr;
      try {
        entry.per_fold[f] = oos_loglik(lambdas, data, folds.held_out[f], states, options.order, options.fit,
                                       options.inflation_exempt, warm, &entry.trained[f]);
        entry.ok[f] = true;
      } catch (const NumericalError&) {
        entry.per_fold[f] = kNegInf;
      }
    });
    double total = 0.0;
    for (double v : entry.per_fold) total += v;
    entry.score = std::isfinite(total) ? total / static_cast<double>(n_folds) : kNegInf;
    const double s = entry.score;
    entries[index] = std::move(entry);
    return s;
  };

  const std::vector<int> start = options.start ? *options.start : grid.midpoint();
  CvResult result = greedy_grid_search(static_cast<int>(grid.axis.size()), grid.dimension, start, score);
  result.best_lambda = grid.values(result.best_index);
  for (auto& step : result.path) step.lambda = grid.values(step.index);
  for (auto& step : result.evaluated) step.lambda = grid.values(step.index);
  result.per_fold_logliks = entries.at(result.best_index).per_fold;
  return result;
}

}  // namespace nphmm
