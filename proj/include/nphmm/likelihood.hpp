#pragma once

#include <set>
#include <vector>

#include <Eigen/Dense>

#include "nphmm/model.hpp"

namespace nphmm {

// Roughness penalty sum_i lambda_i sum_k (Delta^order pi_{i,k})^2. A difference
// term is dropped when any count in its (order+1)-wide stencil is listed in
// inflation_exempt.
struct PenaltyConfig {
  int order = 3;
  std::vector<double> lambdas;
  std::set<int> inflation_exempt;

  // Throws ConfigError unless 1 <= order <= K, lambdas has N finite entries >= 0,
  // and exempt counts lie in {0..K}.
  void validate(int states, int support_bound) const;

  static PenaltyConfig unpenalized(int states, int order = 1) {
    return {order, std::vector<double>(static_cast<std::size_t>(states), 0.0), {}};
  }
};

struct LogLikelihoodValue {
  double loglik = 0.0;
  double penalty = 0.0;
  double penalized = 0.0;
};

// Scaled forward/backward quantities. For each t:
//   predicted.row(t) = Pr(S_t | y_1..y_{t-1})   (delta for t = 0)
//   filtered.row(t)  = Pr(S_t | y_1..y_t)
//   scale(t)         = Pr(y_t | y_1..y_{t-1})
//   backward.row(t)  = Pr(y_{t+1..T} | S_t) / Pr(y_{t+1..T} | y_1..y_t)
// Missing observations use an all-ones emission vector.
struct ForwardBackward {
  Eigen::MatrixXd predicted;
  Eigen::MatrixXd filtered;
  Eigen::MatrixXd backward;
  Eigen::VectorXd scale;
  double loglik = 0.0;
  bool impossible = false;  // some scale(t) == 0; loglik is -inf and other members are partial
};

// Forward pass only when with_backward is false.
ForwardBackward forward_backward(const Eigen::MatrixXd& gamma, const Eigen::VectorXd& delta,
                                 const Eigen::MatrixXd& pmfs, const CountSeries& data,
                                 bool with_backward = true);

// log Pr(y_1..y_T) by the scaled forward recursion. Returns -infinity (not an
// exception) when the data are impossible under the model.
double forward_loglik(const HmmParams& params, const CountSeries& data);

// Coefficients of the order-th forward difference: Delta^m pi_k =
// sum_j c_j pi_{k-m+j}, c_j = (-1)^(m-j) binom(m, j).
std::vector<double> difference_coefficients(int order);

double penalty(const Eigen::MatrixXd& pmfs, const PenaltyConfig& config);

// d penalty / d pmfs.
Eigen::MatrixXd penalty_gradient(const Eigen::MatrixXd& pmfs, const PenaltyConfig& config);

// Derivatives of the log-likelihood with respect to the constrained entries,
// treating gamma, delta and pmfs as unconstrained matrices (delta is not tied
// to gamma here; see stationary_pullback).
struct ConstrainedGradient {
  double loglik = 0.0;
  Eigen::MatrixXd d_gamma;
  Eigen::VectorXd d_delta;
  Eigen::MatrixXd d_pmfs;
};

ConstrainedGradient loglik_gradient(const HmmParams& params, const CountSeries& data);

// Given d f / d delta for delta = stationary_distribution(gamma), returns the
// induced contribution to d f / d gamma.
Eigen::MatrixXd stationary_pullback(const Eigen::MatrixXd& gamma, const Eigen::VectorXd& delta,
                                    const Eigen::VectorXd& d_delta);

// d f / d logits for p = softmax(logits), given d f / d p.
Eigen::VectorXd softmax_pullback(const Eigen::Ref<const Eigen::VectorXd>& probs,
                                 const Eigen::Ref<const Eigen::VectorXd>& d_probs);

LogLikelihoodValue penalized_loglik(const UnconstrainedParams& u, const CountSeries& data,
                                    const PenaltyConfig& config, bool stationary);

// Gradient of the penalized log-likelihood with respect to u.pack() order.
// Throws NumericalError if the likelihood is zero at u.
Eigen::VectorXd gradient(const UnconstrainedParams& u, const CountSeries& data,
                         const PenaltyConfig& config, bool stationary);

// Value and gradient in one pass; value.penalized is -inf (and grad untouched)
// when the data are impossible.
LogLikelihoodValue penalized_loglik_with_gradient(const UnconstrainedParams& u,
                                                  const CountSeries& data,
                                                  const PenaltyConfig& config, bool stationary,
                                                  Eigen::VectorXd& grad);

}  // namespace nphmm
