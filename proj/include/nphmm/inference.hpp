#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "nphmm/model.hpp"

namespace nphmm {

struct DecodeResult {
  std::vector<int> states;  // 0-based
  double joint_log_prob = 0.0;
};

// Most probable state sequence. Among exactly tied optimal paths the
// lexicographically smallest is returned. Throws NumericalError when every
// path has probability zero.
DecodeResult viterbi(const HmmParams& params, const CountSeries& data);

// Pr(S_t = i | y_1..y_T), T x N.
Eigen::MatrixXd state_posteriors(const HmmParams& params, const CountSeries& data);

// Pr(Y_t = k | y_{-t}), T x (K+1).
Eigen::MatrixXd conditional_pmfs(const HmmParams& params, const CountSeries& data);

// Normal ordinary pseudo-residual intervals [lower, upper] and the residual
// at the interval's probability midpoint. Saturated entries are +-infinity.
struct PseudoResiduals {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  Eigen::VectorXd mid;
  std::vector<bool> lower_saturated;
  std::vector<bool> upper_saturated;
};

PseudoResiduals pseudo_residuals(const HmmParams& params, const CountSeries& data);

// Standard normal quantile; returns -inf / +inf at 0 / 1.
double normal_quantile(double p);

// Per-state KL(true || est); est is floored at kProbabilityFloor.
Eigen::VectorXd kld(const Eigen::MatrixXd& true_pmfs, const Eigen::MatrixXd& est_pmfs);

// |est - true| for each off-diagonal entry; the diagonal is reported as zero.
Eigen::MatrixXd transition_mae(const Eigen::MatrixXd& est, const Eigen::MatrixXd& truth);

// Relabelling of decoded states that minimizes disagreements with truth:
// decoded label d maps to truth label result[d].
std::vector<int> best_label_map(std::span<const int> decoded, std::span<const int> truth,
                                int states);

double misclassification_rate(std::span<const int> decoded, std::span<const int> truth,
                              int states);

// Sample autocorrelation at lags 0..max_lag (non-finite values skipped).
std::vector<double> autocorrelation(std::span<const double> x, int max_lag);

}  // namespace nphmm
