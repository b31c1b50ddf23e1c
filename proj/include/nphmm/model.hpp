#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace nphmm {

// Probabilities are floored here before taking logs in to_unconstrained.
inline constexpr double kProbabilityFloor = 1e-12;

// Observed counts on {0, ..., K} with optional missing entries.
class CountSeries {
 public:
  static constexpr int kMissing = -1;

  // Throws ConfigError if empty, K < 1, or any value lies outside {0..K}
  // (kMissing excepted).
  CountSeries(std::vector<int> values, int support_bound);

  std::size_t size() const { return values_.size(); }
  int support_bound() const { return support_bound_; }
  int operator[](std::size_t t) const { return values_[t]; }
  bool missing(std::size_t t) const { return values_[t] == kMissing; }
  std::span<const int> values() const { return values_; }

  std::size_t observed_count() const;
  // Largest observed value, or kMissing when everything is missing.
  int max_observed() const;

  // Copy with the given positions marked missing.
  CountSeries with_missing(std::span<const std::size_t> positions) const;
  // Copy keeping only the given positions; every other entry becomes missing.
  CountSeries keep_only(std::span<const std::size_t> positions) const;
  // Same values on a different support bound (must still cover the data).
  CountSeries with_support(int support_bound) const;

 private:
  std::vector<int> values_;
  int support_bound_;
};

// gamma: N x N row-stochastic. delta: initial distribution. pmfs: N x (K+1)
// state-dependent probability mass functions, one row per state. When
// stationary is set, delta is the stationary distribution of gamma.
struct HmmParams {
  Eigen::MatrixXd gamma;
  Eigen::VectorXd delta;
  Eigen::MatrixXd pmfs;
  bool stationary = true;

  int states() const { return static_cast<int>(gamma.rows()); }
  int support_bound() const { return static_cast<int>(pmfs.cols()) - 1; }

  // Checks shapes, ranges, row sums (1e-12) and, if stationary, delta*gamma = delta (1e-10).
  void validate() const;
};

// Builds params with delta = stationary_distribution(gamma).
HmmParams make_stationary(Eigen::MatrixXd gamma, Eigen::MatrixXd pmfs);

// Working (logit-scale) parameters. Diagonal of gamma_star, delta_star(0) and
// column 0 of pmf_star are pinned to zero. delta_star is empty when the
// initial distribution is tied to stationarity.
struct UnconstrainedParams {
  Eigen::MatrixXd gamma_star;
  Eigen::VectorXd delta_star;
  Eigen::MatrixXd pmf_star;

  int states() const { return static_cast<int>(gamma_star.rows()); }
  int support_bound() const { return static_cast<int>(pmf_star.cols()) - 1; }
  bool stationary() const { return delta_star.size() == 0; }

  // Free (non-pinned) entries in a fixed order: gamma off-diagonals row-major,
  // delta_star(1..N-1), then pmf_star(i, 1..K) state by state.
  Eigen::VectorXd pack() const;
  static UnconstrainedParams unpack(const Eigen::VectorXd& free, int states, int support_bound,
                                    bool stationary);
  static Eigen::Index free_count(int states, int support_bound, bool stationary);
};

// Softmax with max-subtraction; logits of any finite magnitude give an exact
// probability vector.
Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& logits);

UnconstrainedParams to_unconstrained(const HmmParams& params);
HmmParams from_unconstrained(const UnconstrainedParams& u, bool stationary);

// Solves delta * gamma = delta, sum(delta) = 1 by replacing the last balance
// equation with the normalization row. Throws SingularChainError when the
// system is singular.
Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& gamma);

// Reorders states: new state s is old state order[s].
HmmParams permute_states(const HmmParams& params, std::span<const int> order);

// Orders states by ascending pmf mean; returns the applied order.
std::vector<int> canonical_order(const HmmParams& params);
HmmParams canonicalize(const HmmParams& params);

Eigen::VectorXd pmf_means(const Eigen::MatrixXd& pmfs);

struct Simulation {
  std::vector<int> states;  // 0-based state labels
  CountSeries counts;
};

// S_1 ~ delta, S_t | S_{t-1} ~ gamma row, Y_t | S_t ~ pmf row.
Simulation simulate(const HmmParams& params, std::size_t length, std::uint64_t seed);

}  // namespace nphmm
