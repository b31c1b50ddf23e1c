#pragma once

// Logit-scale transition block shared by every estimator: gamma off-diagonal
// logits row-major, then delta_star(1..N-1) when delta is free.

#include <Eigen/Dense>

#include "nphmm/likelihood.hpp"

namespace nphmm::detail {

inline Eigen::Index transition_free_count(int states, bool stationary) {
  const Eigen::Index n = states;
  return n * (n - 1) + (stationary ? 0 : n - 1);
}

// Fills gamma and delta from the leading entries of x. May throw SingularChainError.
void decode_transition(const double* x, int states, bool stationary, Eigen::MatrixXd& gamma,
                       Eigen::VectorXd& delta);

// Writes d f / d (transition logits) into out[0..transition_free_count), given
// d f / d gamma and d f / d delta as unconstrained matrices.
void pullback_transition(const Eigen::MatrixXd& gamma, const Eigen::VectorXd& delta,
                         Eigen::MatrixXd d_gamma, const Eigen::VectorXd& d_delta, bool stationary,
                         double* out);

}  // namespace nphmm::detail
