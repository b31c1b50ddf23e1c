#include "nphmm/likelihood.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "nphmm/errors.hpp"
#include "transition_block.hpp"

namespace nphmm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double emission(const Eigen::MatrixXd& pmfs, int y, Eigen::Index state) {
  return y == CountSeries::kMissing ? 1.0 : pmfs(state, y);
}

void check_shapes(const Eigen::MatrixXd& gamma, const Eigen::VectorXd& delta,
                  const Eigen::MatrixXd& pmfs, const CountSeries& data) {
  const auto n = gamma.rows();
  if (gamma.cols() != n || delta.size() != n || pmfs.rows() != n) {
    throw ConfigError("inconsistent parameter dimensions");
  }
  if (pmfs.cols() != data.support_bound() + 1) {
    throw ConfigError("data support bound K=" + std::to_string(data.support_bound()) +
                      " does not match model K=" + std::to_string(pmfs.cols() - 1));
  }
}

// Penalty value, accumulating its gradient into grad (if non-null) with the given sign.
double penalty_unchecked(const Eigen::MatrixXd& pmfs, const PenaltyConfig& config,
                         Eigen::MatrixXd* grad, double sign) {
  const int k_max = static_cast<int>(pmfs.cols()) - 1;
  const int m = config.order;
  const auto coef = difference_coefficients(m);
  std::vector<bool> exempt(static_cast<std::size_t>(k_max + 1), false);
  for (int c : config.inflation_exempt)
    if (c >= 0 && c <= k_max) exempt[static_cast<std::size_t>(c)] = true;

  double total = 0.0;
  for (Eigen::Index i = 0; i < pmfs.rows(); ++i) {
    const double lambda = config.lambdas[static_cast<std::size_t>(i)];
    if (lambda == 0.0) continue;
    double row_sum = 0.0;
    for (int k = m; k <= k_max; ++k) {
      bool skip = false;
      for (int j = k - m; j <= k && !skip; ++j) skip = exempt[static_cast<std::size_t>(j)];
      if (skip) continue;
      double d = 0.0;
      for (int j = 0; j <= m; ++j) d += coef[static_cast<std::size_t>(j)] * pmfs(i, k - m + j);
      row_sum += d * d;
      if (grad) {
        for (int j = 0; j <= m; ++j)
          (*grad)(i, k - m + j) += sign * 2.0 * lambda * d * coef[static_cast<std::size_t>(j)];
      }
    }
    total += lambda * row_sum;
  }
  return total;
}

}  // namespace

void PenaltyConfig::validate(int states, int support_bound) const {
  if (order < 1) throw ConfigError("difference order must be at least 1");
  if (order > support_bound) {
    throw ConfigError("difference order " + std::to_string(order) + " exceeds support bound K=" +
                      std::to_string(support_bound));
  }
  if (static_cast<int>(lambdas.size()) != states) {
    throw ConfigError("expected " + std::to_string(states) + " smoothing parameters, got " +
                      std::to_string(lambdas.size()));
  }
  for (double l : lambdas)
    if (!std::isfinite(l) || l < 0.0) throw ConfigError("smoothing parameters must be finite and >= 0");
  for (int c : inflation_exempt)
    if (c < 0 || c > support_bound) throw ConfigError("inflation-exempt count outside the support");
}

std::vector<double> difference_coefficients(int order) {
  std::vector<double> coef(static_cast<std::size_t>(order + 1));
  double binom = 1.0;
  for (int j = 0; j <= order; ++j) {
    const double sign = ((order - j) % 2 == 0) ? 1.0 : -1.0;
    coef[static_cast<std::size_t>(j)] = sign * binom;
    binom = binom * (order - j) / (j + 1);
  }
  return coef;
}

ForwardBackward forward_backward(const Eigen::MatrixXd& gamma, const Eigen::VectorXd& delta,
                                 const Eigen::MatrixXd& pmfs, const CountSeries& data,
                                 bool with_backward) {
  check_shapes(gamma, delta, pmfs, data);
  const auto n = gamma.rows();
  const auto len = static_cast<Eigen::Index>(data.size());

  ForwardBackward fb;
  fb.predicted.resize(len, n);
  fb.filtered.resize(len, n);
  fb.scale.resize(len);

  for (Eigen::Index t = 0; t < len; ++t) {
    const int y = data[static_cast<std::size_t>(t)];
    for (Eigen::Index j = 0; j < n; ++j) {
      double p;
      if (t == 0) {
        p = delta(j);
      } else {
        p = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) p += fb.filtered(t - 1, i) * gamma(i, j);
      }
      fb.predicted(t, j) = p;
    }
    double c = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double joint = fb.predicted(t, j) * emission(pmfs, y, j);
      fb.filtered(t, j) = joint;
      c += joint;
    }
    fb.scale(t) = c;
    if (!(c > 0.0)) {
      fb.impossible = true;
      fb.loglik = kNegInf;
      return fb;
    }
    fb.filtered.row(t) /= c;
    fb.loglik += std::log(c);
  }

  if (with_backward) {
    fb.backward.resize(len, n);
    fb.backward.row(len - 1).setOnes();
    for (Eigen::Index t = len - 2; t >= 0; --t) {
      const int y = data[static_cast<std::size_t>(t + 1)];
      for (Eigen::Index i = 0; i < n; ++i) {
        double b = 0.0;
        for (Eigen::Index j = 0; j < n; ++j)
          b += gamma(i, j) * emission(pmfs, y, j) * fb.backward(t + 1, j);
        fb.backward(t, i) = b / fb.scale(t + 1);
      }
    }
  }
  return fb;
}

double forward_loglik(const HmmParams& params, const CountSeries& data) {
  params.validate();
  return forward_backward(params.gamma, params.delta, params.pmfs, data, false).loglik;
}

double penalty(const Eigen::MatrixXd& pmfs, const PenaltyConfig& config) {
  config.validate(static_cast<int>(pmfs.rows()), static_cast<int>(pmfs.cols()) - 1);
  return penalty_unchecked(pmfs, config, nullptr, 1.0);
}

Eigen::MatrixXd penalty_gradient(const Eigen::MatrixXd& pmfs, const PenaltyConfig& config) {
  config.validate(static_cast<int>(pmfs.rows()), static_cast<int>(pmfs.cols()) - 1);
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(pmfs.rows(), pmfs.cols());
  penalty_unchecked(pmfs, config, &grad, 1.0);
  return grad;
}

ConstrainedGradient loglik_gradient(const HmmParams& params, const CountSeries& data) {
  const ForwardBackward fb = forward_backward(params.gamma, params.delta, params.pmfs, data, true);
  const auto n = params.gamma.rows();
  ConstrainedGradient g;
  g.loglik = fb.loglik;
  g.d_gamma = Eigen::MatrixXd::Zero(n, n);
  g.d_delta = Eigen::VectorXd::Zero(n);
  g.d_pmfs = Eigen::MatrixXd::Zero(n, params.pmfs.cols());
  if (fb.impossible) return g;

  const auto len = static_cast<Eigen::Index>(data.size());
  for (Eigen::Index t = 0; t < len; ++t) {
    const int y = data[static_cast<std::size_t>(t)];
    const double inv_c = 1.0 / fb.scale(t);
    if (y != CountSeries::kMissing) {
      for (Eigen::Index i = 0; i < n; ++i)
        g.d_pmfs(i, y) += fb.predicted(t, i) * fb.backward(t, i) * inv_c;
    }
    if (t == 0) {
      for (Eigen::Index i = 0; i < n; ++i)
        g.d_delta(i) = emission(params.pmfs, y, i) * fb.backward(0, i) * inv_c;
    } else {
      for (Eigen::Index j = 0; j < n; ++j) {
        const double right = emission(params.pmfs, y, j) * fb.backward(t, j) * inv_c;
        for (Eigen::Index i = 0; i < n; ++i) g.d_gamma(i, j) += fb.filtered(t - 1, i) * right;
      }
    }
  }
  return g;
}

Eigen::MatrixXd stationary_pullback(const Eigen::MatrixXd& gamma, const Eigen::VectorXd& delta,
                                    const Eigen::VectorXd& d_delta) {
  // delta solves M delta = e_N with M = (I - gamma^T) whose last row is
  // replaced by ones; differentiating gives d delta = delta_i M^{-1} e_j
  // for a perturbation of gamma(i, j), j < N - 1.
  const auto n = gamma.rows();
  Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n) - gamma.transpose();
  system.row(n - 1).setOnes();
  const Eigen::VectorXd w = system.transpose().fullPivLu().solve(d_delta);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j + 1 < n; ++j) out(i, j) = delta(i) * w(j);
  return out;
}

Eigen::VectorXd softmax_pullback(const Eigen::Ref<const Eigen::VectorXd>& probs,
                                 const Eigen::Ref<const Eigen::VectorXd>& d_probs) {
  const double mean = probs.dot(d_probs);
  return probs.array() * (d_probs.array() - mean);
}

LogLikelihoodValue penalized_loglik(const UnconstrainedParams& u, const CountSeries& data,
                                    const PenaltyConfig& config, bool stationary) {
  config.validate(u.states(), u.support_bound());
  LogLikelihoodValue v;
  HmmParams p;
  try {
    p = from_unconstrained(u, stationary);
  } catch (const SingularChainError&) {
    v.loglik = v.penalized = kNegInf;
    return v;
  }
  v.loglik = forward_backward(p.gamma, p.delta, p.pmfs, data, false).loglik;
  v.penalty = penalty_unchecked(p.pmfs, config, nullptr, 1.0);
  v.penalized = v.loglik - v.penalty;
  return v;
}

LogLikelihoodValue penalized_loglik_with_gradient(const UnconstrainedParams& u,
                                                  const CountSeries& data,
                                                  const PenaltyConfig& config, bool stationary,
                                                  Eigen::VectorXd& grad) {
  LogLikelihoodValue v;
  HmmParams p;
  try {
    p = from_unconstrained(u, stationary);
  } catch (const SingularChainError&) {
    v.loglik = v.penalized = kNegInf;
    return v;
  }
  ConstrainedGradient cg = loglik_gradient(p, data);
  v.loglik = cg.loglik;
  if (!std::isfinite(cg.loglik)) {
    v.penalized = kNegInf;
    return v;
  }
  v.penalty = penalty_unchecked(p.pmfs, config, &cg.d_pmfs, -1.0);
  v.penalized = v.loglik - v.penalty;

  const int n = u.states();
  const int k = u.support_bound();
  grad.resize(UnconstrainedParams::free_count(n, k, stationary));
  detail::pullback_transition(p.gamma, p.delta, cg.d_gamma, cg.d_delta, stationary, grad.data());
  Eigen::Index pos = detail::transition_free_count(n, stationary);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd row = softmax_pullback(p.pmfs.row(i).transpose(), cg.d_pmfs.row(i).transpose());
    for (int c = 1; c <= k; ++c) grad(pos++) = row(c);
  }
  return v;
}

Eigen::VectorXd gradient(const UnconstrainedParams& u, const CountSeries& data,
                         const PenaltyConfig& config, bool stationary) {
  config.validate(u.states(), u.support_bound());
  Eigen::VectorXd grad;
  const LogLikelihoodValue v = penalized_loglik_with_gradient(u, data, config, stationary, grad);
  if (!std::isfinite(v.penalized)) throw NumericalError("penalized log-likelihood is not finite");
  return grad;
}

namespace detail {

void decode_transition(const double* x, int states, bool stationary, Eigen::MatrixXd& gamma,
                       Eigen::VectorXd& delta) {
  gamma.resize(states, states);
  Eigen::VectorXd logits(states);
  for (int i = 0; i < states; ++i) {
    for (int j = 0; j < states; ++j) logits(j) = i == j ? 0.0 : *x++;
    gamma.row(i) = softmax(logits).transpose();
  }
  if (stationary) {
    delta = stationary_distribution(gamma);
  } else {
    logits(0) = 0.0;
    for (int i = 1; i < states; ++i) logits(i) = *x++;
    delta = softmax(logits);
  }
}

void pullback_transition(const Eigen::MatrixXd& gamma, const Eigen::VectorXd& delta,
                         Eigen::MatrixXd d_gamma, const Eigen::VectorXd& d_delta, bool stationary,
                         double* out) {
  const auto n = gamma.rows();
  if (stationary) d_gamma += stationary_pullback(gamma, delta, d_delta);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd row = softmax_pullback(gamma.row(i).transpose(), d_gamma.row(i).transpose());
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j) *out++ = row(j);
  }
  if (!stationary) {
    const Eigen::VectorXd d = softmax_pullback(delta, d_delta);
    for (Eigen::Index i = 1; i < n; ++i) *out++ = d(i);
  }
}

}  // namespace detail

}  // namespace nphmm
