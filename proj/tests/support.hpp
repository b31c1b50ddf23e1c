#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "nphmm/likelihood.hpp"
#include "nphmm/model.hpp"
#include "nphmm/rng.hpp"

namespace nphmm::testing {

// Random probability vector with entries bounded away from zero.
inline Eigen::VectorXd random_simplex(Rng& rng, Eigen::Index n, double floor = 0.02) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = floor + rng.uniform();
  return v / v.sum();
}

inline Eigen::MatrixXd random_stochastic(Rng& rng, Eigen::Index rows, Eigen::Index cols, double floor = 0.02) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) m.row(i) = random_simplex(rng, cols, floor).transpose();
  return m;
}

inline HmmParams random_params(Rng& rng, int states, int support, bool stationary) {
  HmmParams p;
  p.gamma = random_stochastic(rng, states, states);
  p.pmfs = random_stochastic(rng, states, support + 1);
  p.stationary = stationary;
  p.delta = stationary ? stationary_distribution(p.gamma) : random_simplex(rng, states);
  return p;
}

inline CountSeries random_counts(Rng& rng, std::size_t length, int support, double missing_rate = 0.0) {
  std::vector<int> values(length);
  for (auto& y : values) {
    y = rng.uniform() < missing_rate ? CountSeries::kMissing : static_cast<int>(rng.below(support + 1));
  }
  return CountSeries(std::move(values), support);
}

// Calls visit(path, joint probability) for every one of N^T state paths.
inline void for_each_path(const HmmParams& p, const CountSeries& data,
                          const std::function<void(const std::vector<int>&, double)>& visit) {
  const int n = p.states();
  const std::size_t length = data.size();
  std::vector<int> path(length, 0);
  for (;;) {
    double joint = 1.0;
    for (std::size_t t = 0; t < length; ++t) {
      const int s = path[t];
      joint *= t == 0 ? p.delta(s) : p.gamma(path[t - 1], s);
      if (!data.missing(t)) joint *= p.pmfs(s, data[t]);
    }
    visit(path, joint);
    std::size_t pos = length;
    while (pos > 0) {
      --pos;
      if (++path[pos] < n) break;
      path[pos] = 0;
      if (pos == 0) return;
    }
    if (length == 0) return;
  }
}

inline double brute_force_loglik(const HmmParams& p, const CountSeries& data) {
  long double total = 0.0L;
  for_each_path(p, data, [&](const std::vector<int>&, double joint) { total += joint; });
  return std::log(static_cast<double>(total));
}

// Argmax joint path; the first path in lexicographic order wins ties.
inline std::vector<int> brute_force_viterbi(const HmmParams& p, const CountSeries& data) {
  std::vector<int> best;
  double best_joint = -1.0;
  for_each_path(p, data, [&](const std::vector<int>& path, double joint) {
    if (joint > best_joint) {
      best_joint = joint;
      best = path;
    }
  });
  return best;
}

// Central differences of f at x with step h.
inline Eigen::VectorXd central_differences(const std::function<double(const Eigen::VectorXd&)>& f,
                                           const Eigen::VectorXd& x, double h = 1e-6) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    g(i) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

// |a - b| / max(|a|, |b|, 1): relative where the derivative is large, absolute
// near zero, where central differences only carry absolute accuracy.
inline double max_relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a(i)), std::abs(b(i)), 1.0});
    worst = std::max(worst, std::abs(a(i) - b(i)) / scale);
  }
  return worst;
}

}  // namespace nphmm::testing
