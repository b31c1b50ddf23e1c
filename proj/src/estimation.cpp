#include "nphmm/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "nphmm/optimize.hpp"
#include "nphmm/rng.hpp"
#include "transition_block.hpp"

namespace nphmm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kNewtonIterations = 50;

// Observed counts split at empirical quantiles into `states` ordered groups.
std::vector<std::vector<int>> quantile_groups(const CountSeries& data, int states) {
  std::vector<int> observed;
  observed.reserve(data.size());
  for (int y : data.values())
    if (y != CountSeries::kMissing) observed.push_back(y);
  std::sort(observed.begin(), observed.end());
  std::vector<std::vector<int>> groups(static_cast<std::size_t>(states));
  const std::size_t total = observed.size();
  for (int g = 0; g < states; ++g) {
    const std::size_t lo = total * static_cast<std::size_t>(g) / static_cast<std::size_t>(states);
    const std::size_t hi = total * static_cast<std::size_t>(g + 1) / static_cast<std::size_t>(states);
    groups[static_cast<std::size_t>(g)].assign(observed.begin() + static_cast<std::ptrdiff_t>(lo),
                                               observed.begin() + static_cast<std::ptrdiff_t>(hi));
  }
  return groups;
}

// Leading transition block of start 0: 0.9 on the diagonal, uniform initial distribution.
Eigen::VectorXd default_transition_start(int states, bool stationary) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(detail::transition_free_count(states, stationary));
  if (states > 1) {
    const double off = std::log(0.1 / (states - 1)) - std::log(0.9);
    x.head(static_cast<Eigen::Index>(states) * (states - 1)).setConstant(off);
  }
  return x;
}

std::vector<Eigen::VectorXd> jittered(const Eigen::VectorXd& base, int n_starts, std::uint64_t seed) {
  std::vector<Eigen::VectorXd> starts{base};
  for (int s = 1; s < n_starts; ++s) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(s)));
    Eigen::VectorXd x = base;
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) += rng.uniform(-1.0, 1.0);
    starts.push_back(std::move(x));
  }
  return starts;
}

struct Candidate {
  Eigen::VectorXd x;
  double penalized = -kInf;
  int iterations = 0;
  bool converged = false;
};

// Maximizes -objective from each start; returns the best start and fills diagnostics.
Candidate best_of(const Objective& objective, const std::vector<Eigen::VectorXd>& starts,
                  const FitConfig& config, std::vector<StartDiagnostic>& diagnostics, int& best_index) {
  OptimizerOptions options;
  options.max_iterations = config.max_iterations;
  options.gradient_tolerance = config.gradient_tolerance;
  options.relative_tolerance = config.relative_tolerance;

  Candidate best;
  best_index = -1;
  for (std::size_t s = 0; s < starts.size(); ++s) {
    StartDiagnostic d;
    d.index = static_cast<int>(s);
    try {
      OptimizerResult r = minimize_bfgs(objective, starts[s], options);
      try {
        OptimizerOptions polish = options;
        polish.max_iterations = kNewtonIterations;
        OptimizerResult n = refine_newton(objective, r.x, polish);
        if (n.value <= r.value) {
          n.iterations += r.iterations;
          r = std::move(n);
        }
      } catch (const NumericalError&) {
      }
      d.penalized_loglik = -r.value;
      d.iterations = r.iterations;
      d.converged = r.converged;
      d.status = r.status;
      if (std::isfinite(r.value) && -r.value > best.penalized) {
        best = {std::move(r.x), -r.value, r.iterations, r.converged};
        best_index = d.index;
      }
    } catch (const NumericalError& e) {
      d.penalized_loglik = -kInf;
      d.status = e.what();
    }
    diagnostics.push_back(std::move(d));
  }
  if (best_index < 0) throw FitError("every start point failed to produce a finite objective", diagnostics);
  return best;
}

FitResult assemble(const HmmParams& raw, double loglik, const Candidate& best, int best_index,
                   std::vector<StartDiagnostic> diagnostics, const FitConfig& config) {
  FitResult result;
  result.state_order = canonical_order(raw);
  result.params = permute_states(raw, result.state_order);
  result.loglik = loglik;
  result.penalized_loglik = best.penalized;
  result.converged = best.converged;
  result.n_iterations = best.iterations;
  result.start_index_of_best = best_index;
  result.seed = config.seed;
  result.starts = std::move(diagnostics);
  return result;
}

// Objective for models whose pmfs come from `emission` (theta -> pmfs,
// plus the pullback of d f / d pmfs onto theta).
struct EmissionModel {
  Eigen::Index free = 0;
  std::function<Eigen::MatrixXd(const double* theta)> pmfs;
  std::function<void(const double* theta, const Eigen::MatrixXd& pmfs, const Eigen::MatrixXd& d_pmfs,
                     double* out)>
      pullback;
};

Objective emission_objective(const CountSeries& data, int states, bool stationary,
                             const EmissionModel& model) {
  const Eigen::Index head = detail::transition_free_count(states, stationary);
  return [&data, states, stationary, model, head](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
    HmmParams p;
    p.stationary = stationary;
    try {
      detail::decode_transition(x.data(), states, stationary, p.gamma, p.delta);
    } catch (const SingularChainError&) {
      return kInf;
    }
    p.pmfs = model.pmfs(x.data() + head);
    const ConstrainedGradient cg = loglik_gradient(p, data);
    if (!std::isfinite(cg.loglik)) return kInf;
    grad.resize(x.size());
    detail::pullback_transition(p.gamma, p.delta, cg.d_gamma, cg.d_delta, stationary, grad.data());
    if (model.free > 0) model.pullback(x.data() + head, p.pmfs, cg.d_pmfs, grad.data() + head);
    grad = -grad;
    return -cg.loglik;
  };
}

HmmParams decode_emission_params(const Eigen::VectorXd& x, int states, bool stationary,
                                 const EmissionModel& model) {
  HmmParams p;
  p.stationary = stationary;
  detail::decode_transition(x.data(), states, stationary, p.gamma, p.delta);
  p.pmfs = model.pmfs(x.data() + detail::transition_free_count(states, stationary));
  return p;
}

}  // namespace

void FitConfig::validate() const {
  if (n_starts < 1) throw ConfigError("n_starts must be at least 1");
  if (max_iterations < 1) throw ConfigError("max_iterations must be at least 1");
  if (!(gradient_tolerance > 0.0) || !(relative_tolerance > 0.0)) {
    throw ConfigError("convergence tolerances must be positive");
  }
}

std::vector<UnconstrainedParams> make_starts(const CountSeries& data, int states, int n_starts,
                                             std::uint64_t seed, bool stationary) {
  if (states < 1) throw ConfigError("number of states must be at least 1");
  if (n_starts < 1) throw ConfigError("n_starts must be at least 1");
  const int k = data.support_bound();
  const auto groups = quantile_groups(data, states);

  UnconstrainedParams u0;
  u0.pmf_star = Eigen::MatrixXd::Zero(states, k + 1);
  for (int i = 0; i < states; ++i) {
    const auto& group = groups[static_cast<std::size_t>(i)];
    Eigen::VectorXd pmf = Eigen::VectorXd::Constant(k + 1, 1.0 / (k + 1));
    if (!group.empty()) {
      Eigen::VectorXd hist = Eigen::VectorXd::Zero(k + 1);
      for (int y : group) hist(y) += 1.0;
      pmf = 0.5 * pmf + 0.5 * hist / static_cast<double>(group.size());
    }
    for (int c = 1; c <= k; ++c) u0.pmf_star(i, c) = std::log(pmf(c)) - std::log(pmf(0));
  }
  const Eigen::VectorXd head = default_transition_start(states, stationary);
  u0.gamma_star = Eigen::MatrixXd::Zero(states, states);
  u0.delta_star = stationary ? Eigen::VectorXd() : Eigen::VectorXd::Zero(states);
  {
    Eigen::Index pos = 0;
    for (int i = 0; i < states; ++i)
      for (int j = 0; j < states; ++j)
        if (i != j) u0.gamma_star(i, j) = head(pos++);
  }

  std::vector<UnconstrainedParams> starts;
  for (const Eigen::VectorXd& x : jittered(u0.pack(), n_starts, seed))
    starts.push_back(UnconstrainedParams::unpack(x, states, k, stationary));
  return starts;
}

FitResult fit_from(const CountSeries& data, std::span<const UnconstrainedParams> starts,
                   const FitConfig& config, const PenaltyConfig& penalty) {
  config.validate();
  if (starts.empty()) throw ConfigError("no start points supplied");
  const int n = starts.front().states();
  const int k = starts.front().support_bound();
  if (k != data.support_bound()) throw ConfigError("start points do not match the data support bound");
  penalty.validate(n, k);

  const bool stationary = config.stationary;
  Objective objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
    const UnconstrainedParams u = UnconstrainedParams::unpack(x, n, k, stationary);
    const LogLikelihoodValue v = penalized_loglik_with_gradient(u, data, penalty, stationary, grad);
    if (!std::isfinite(v.penalized)) return kInf;
    grad = -grad;
    return -v.penalized;
  };

  std::vector<Eigen::VectorXd> packed;
  for (const auto& u : starts) {
    if (u.states() != n || u.support_bound() != k || u.stationary() != stationary) {
      throw ConfigError("start points have inconsistent shapes");
    }
    packed.push_back(u.pack());
  }
  std::vector<StartDiagnostic> diagnostics;
  int best_index = 0;
  const Candidate best = best_of(objective, packed, config, diagnostics, best_index);

  UnconstrainedParams working = UnconstrainedParams::unpack(best.x, n, k, stationary);
  const HmmParams raw = from_unconstrained(working, stationary);
  const LogLikelihoodValue v = penalized_loglik(working, data, penalty, stationary);
  FitResult result = assemble(raw, v.loglik, best, best_index, std::move(diagnostics), config);
  result.penalized_loglik = v.penalized;
  result.working = std::move(working);
  for (int s : result.state_order) result.lambdas.push_back(penalty.lambdas[static_cast<std::size_t>(s)]);
  return result;
}

FitResult fit(const CountSeries& data, int states, const FitConfig& config,
              const PenaltyConfig& penalty) {
  config.validate();
  if (states < 1) throw ConfigError("number of states must be at least 1");
  const auto starts = make_starts(data, states, config.n_starts, config.seed, config.stationary);
  return fit_from(data, starts, config, penalty);
}

Eigen::VectorXd truncated_poisson(double rate, int support_bound) {
  Eigen::VectorXd logp(support_bound + 1);
  const double log_rate = std::log(rate);
  for (int c = 0; c <= support_bound; ++c) logp(c) = c * log_rate - std::lgamma(c + 1.0);
  return softmax(logp);
}

FitResult fit_poisson(const CountSeries& data, int states, const FitConfig& config,
                      Eigen::VectorXd* rates) {
  config.validate();
  if (states < 1) throw ConfigError("number of states must be at least 1");
  const int k = data.support_bound();

  EmissionModel model;
  model.free = states;
  model.pmfs = [states, k](const double* theta) {
    Eigen::MatrixXd pmfs(states, k + 1);
    for (int i = 0; i < states; ++i) pmfs.row(i) = truncated_poisson(std::exp(theta[i]), k).transpose();
    return pmfs;
  };
  model.pullback = [states, k](const double*, const Eigen::MatrixXd& pmfs, const Eigen::MatrixXd& d_pmfs,
                               double* out) {
    // d pi_c / d log(rate) = pi_c (c - mean) for the renormalized pmf.
    for (int i = 0; i < states; ++i) {
      double mean = 0.0;
      for (int c = 0; c <= k; ++c) mean += c * pmfs(i, c);
      double g = 0.0;
      for (int c = 0; c <= k; ++c) g += d_pmfs(i, c) * pmfs(i, c) * (c - mean);
      out[i] = g;
    }
  };

  const auto groups = quantile_groups(data, states);
  Eigen::VectorXd base(detail::transition_free_count(states, config.stationary) + states);
  base.head(base.size() - states) = default_transition_start(states, config.stationary);
  for (int i = 0; i < states; ++i) {
    const auto& group = groups[static_cast<std::size_t>(i)];
    double mean = 0.5 * k;
    if (!group.empty()) {
      mean = 0.0;
      for (int y : group) mean += y;
      mean /= static_cast<double>(group.size());
    }
    base(base.size() - states + i) = std::log(mean + 0.5);
  }

  const Objective objective = emission_objective(data, states, config.stationary, model);
  std::vector<StartDiagnostic> diagnostics;
  int best_index = 0;
  const Candidate best = best_of(objective, jittered(base, config.n_starts, config.seed), config,
                                 diagnostics, best_index);
  const HmmParams raw = decode_emission_params(best.x, states, config.stationary, model);
  FitResult result = assemble(raw, best.penalized, best, best_index, std::move(diagnostics), config);
  result.working = to_unconstrained(result.params);
  if (rates) {
    Eigen::VectorXd r(states);
    for (int i = 0; i < states; ++i) r(i) = std::exp(best.x(best.x.size() - states + i));
    *rates = Eigen::VectorXd(states);
    for (int i = 0; i < states; ++i) (*rates)(i) = r(result.state_order[static_cast<std::size_t>(i)]);
  }
  return result;
}

FitResult fit_fixed_pmfs(const CountSeries& data, const Eigen::MatrixXd& pmfs, const FitConfig& config) {
  config.validate();
  const int states = static_cast<int>(pmfs.rows());
  if (states < 1 || pmfs.cols() != data.support_bound() + 1) {
    throw ConfigError("fixed pmf matrix does not match the data support bound");
  }
  EmissionModel model;
  model.pmfs = [pmfs](const double*) { return pmfs; };

  const Eigen::VectorXd base = default_transition_start(states, config.stationary);
  const Objective objective = emission_objective(data, states, config.stationary, model);
  std::vector<StartDiagnostic> diagnostics;
  int best_index = 0;
  const Candidate best = best_of(objective, jittered(base, config.n_starts, config.seed), config,
                                 diagnostics, best_index);
  const HmmParams raw = decode_emission_params(best.x, states, config.stationary, model);
  FitResult result = assemble(raw, best.penalized, best, best_index, std::move(diagnostics), config);
  result.working = to_unconstrained(result.params);
  return result;
}

}  // namespace nphmm
