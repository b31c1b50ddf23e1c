#include "nphmm/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "nphmm/errors.hpp"
#include "nphmm/rng.hpp"

namespace nphmm {

CountSeries::CountSeries(std::vector<int> values, int support_bound)
    : values_(std::move(values)), support_bound_(support_bound) {
  if (values_.empty()) throw ConfigError("count series is empty");
  if (support_bound_ < 1) throw ConfigError("support bound K must be at least 1");
  for (std::size_t t = 0; t < values_.size(); ++t) {
    const int y = values_[t];
    if (y == kMissing) continue;
    if (y < 0 || y > support_bound_) {
      throw ConfigError("observation " + std::to_string(y) + " at position " + std::to_string(t) +
                        " lies outside the support {0.." + std::to_string(support_bound_) + "}");
    }
  }
}

std::size_t CountSeries::observed_count() const {
  return static_cast<std::size_t>(
      std::count_if(values_.begin(), values_.end(), [](int y) { return y != kMissing; }));
}

int CountSeries::max_observed() const {
  return values_.empty() ? kMissing : *std::max_element(values_.begin(), values_.end());
}

CountSeries CountSeries::with_missing(std::span<const std::size_t> positions) const {
  std::vector<int> out = values_;
  for (std::size_t t : positions) out.at(t) = kMissing;
  return CountSeries(std::move(out), support_bound_);
}

CountSeries CountSeries::keep_only(std::span<const std::size_t> positions) const {
  std::vector<int> out(values_.size(), kMissing);
  for (std::size_t t : positions) out.at(t) = values_.at(t);
  return CountSeries(std::move(out), support_bound_);
}

CountSeries CountSeries::with_support(int support_bound) const {
  return CountSeries(values_, support_bound);
}

namespace {

void check_stochastic_rows(const Eigen::MatrixXd& m, const char* name) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      if (!(v >= 0.0 && v <= 1.0)) {
        throw ConfigError(std::string(name) + " has an entry outside [0,1] in row " +
                          std::to_string(i));
      }
    }
    if (std::abs(m.row(i).sum() - 1.0) > 1e-12) {
      throw ConfigError(std::string(name) + " row " + std::to_string(i) + " does not sum to 1");
    }
  }
}

}  // namespace

void HmmParams::validate() const {
  const auto n = gamma.rows();
  if (n < 1 || gamma.cols() != n) throw ConfigError("transition matrix must be square and non-empty");
  if (delta.size() != n) throw ConfigError("initial distribution length does not match states");
  if (pmfs.rows() != n) throw ConfigError("pmf matrix must have one row per state");
  if (pmfs.cols() < 2) throw ConfigError("pmf support must contain at least {0, 1}");
  check_stochastic_rows(gamma, "transition matrix");
  check_stochastic_rows(pmfs, "state pmf matrix");
  check_stochastic_rows(delta.transpose(), "initial distribution");
  if (stationary) {
    const Eigen::RowVectorXd residual = delta.transpose() * gamma - delta.transpose();
    if (residual.cwiseAbs().maxCoeff() > 1e-10) {
      throw ConfigError("initial distribution is flagged stationary but delta * gamma != delta");
    }
  }
}

HmmParams make_stationary(Eigen::MatrixXd gamma, Eigen::MatrixXd pmfs) {
  HmmParams p;
  p.delta = stationary_distribution(gamma);
  p.gamma = std::move(gamma);
  p.pmfs = std::move(pmfs);
  p.stationary = true;
  return p;
}

Eigen::Index UnconstrainedParams::free_count(int states, int support_bound, bool stationary) {
  const Eigen::Index n = states;
  return n * (n - 1) + (stationary ? 0 : n - 1) + n * support_bound;
}

Eigen::VectorXd UnconstrainedParams::pack() const {
  const int n = states();
  const int k = support_bound();
  Eigen::VectorXd out(free_count(n, k, stationary()));
  Eigen::Index pos = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) out(pos++) = gamma_star(i, j);
  for (Eigen::Index i = 1; i < delta_star.size(); ++i) out(pos++) = delta_star(i);
  for (int i = 0; i < n; ++i)
    for (int c = 1; c <= k; ++c) out(pos++) = pmf_star(i, c);
  return out;
}

UnconstrainedParams UnconstrainedParams::unpack(const Eigen::VectorXd& free, int states,
                                                int support_bound, bool stationary) {
  if (free.size() != free_count(states, support_bound, stationary)) {
    throw ConfigError("free parameter vector has the wrong length");
  }
  UnconstrainedParams u;
  u.gamma_star = Eigen::MatrixXd::Zero(states, states);
  u.delta_star = stationary ? Eigen::VectorXd() : Eigen::VectorXd::Zero(states);
  u.pmf_star = Eigen::MatrixXd::Zero(states, support_bound + 1);
  Eigen::Index pos = 0;
  for (int i = 0; i < states; ++i)
    for (int j = 0; j < states; ++j)
      if (i != j) u.gamma_star(i, j) = free(pos++);
  if (!stationary)
    for (int i = 1; i < states; ++i) u.delta_star(i) = free(pos++);
  for (int i = 0; i < states; ++i)
    for (int c = 1; c <= support_bound; ++c) u.pmf_star(i, c) = free(pos++);
  return u;
}

Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  const double top = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - top).exp();
  return e / e.sum();
}

namespace {

double floored_log(double p) { return std::log(std::max(p, kProbabilityFloor)); }

}  // namespace

UnconstrainedParams to_unconstrained(const HmmParams& params) {
  params.validate();
  const int n = params.states();
  const int k = params.support_bound();
  UnconstrainedParams u;
  u.gamma_star.resize(n, n);
  for (int i = 0; i < n; ++i) {
    const double ref = floored_log(params.gamma(i, i));
    for (int j = 0; j < n; ++j) u.gamma_star(i, j) = i == j ? 0.0 : floored_log(params.gamma(i, j)) - ref;
  }
  if (!params.stationary) {
    u.delta_star.resize(n);
    const double ref = floored_log(params.delta(0));
    u.delta_star(0) = 0.0;
    for (int i = 1; i < n; ++i) u.delta_star(i) = floored_log(params.delta(i)) - ref;
  }
  u.pmf_star.resize(n, k + 1);
  for (int i = 0; i < n; ++i) {
    const double ref = floored_log(params.pmfs(i, 0));
    u.pmf_star(i, 0) = 0.0;
    for (int c = 1; c <= k; ++c) u.pmf_star(i, c) = floored_log(params.pmfs(i, c)) - ref;
  }
  return u;
}

HmmParams from_unconstrained(const UnconstrainedParams& u, bool stationary) {
  const int n = u.states();
  HmmParams p;
  p.stationary = stationary;
  p.gamma.resize(n, n);
  for (int i = 0; i < n; ++i) p.gamma.row(i) = softmax(u.gamma_star.row(i).transpose()).transpose();
  p.pmfs.resize(n, u.pmf_star.cols());
  for (int i = 0; i < n; ++i) p.pmfs.row(i) = softmax(u.pmf_star.row(i).transpose()).transpose();
  if (stationary) {
    p.delta = stationary_distribution(p.gamma);
  } else {
    if (u.delta_star.size() != n) throw ConfigError("delta_star is required when not stationary");
    p.delta = softmax(u.delta_star);
  }
  return p;
}

Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& gamma) {
  const auto n = gamma.rows();
  if (n < 1 || gamma.cols() != n) throw ConfigError("transition matrix must be square");
  Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n) - gamma.transpose();
  system.row(n - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  rhs(n - 1) = 1.0;

  Eigen::FullPivLU<Eigen::MatrixXd> lu(system);
  if (!lu.isInvertible()) {
    throw SingularChainError("stationary distribution is not unique (reducible transition matrix)");
  }
  Eigen::VectorXd delta = lu.solve(rhs);
  if (!delta.allFinite() || delta.minCoeff() < -1e-10) {
    throw SingularChainError("stationary system is numerically singular");
  }
  delta = delta.cwiseMax(0.0);
  return delta / delta.sum();
}

HmmParams permute_states(const HmmParams& params, std::span<const int> order) {
  const int n = params.states();
  if (static_cast<int>(order.size()) != n) throw ConfigError("permutation length mismatch");
  HmmParams out = params;
  for (int a = 0; a < n; ++a) {
    out.delta(a) = params.delta(order[a]);
    out.pmfs.row(a) = params.pmfs.row(order[a]);
    for (int b = 0; b < n; ++b) out.gamma(a, b) = params.gamma(order[a], order[b]);
  }
  return out;
}

Eigen::VectorXd pmf_means(const Eigen::MatrixXd& pmfs) {
  const Eigen::VectorXd support = Eigen::VectorXd::LinSpaced(pmfs.cols(), 0.0, double(pmfs.cols() - 1));
  return pmfs * support;
}

std::vector<int> canonical_order(const HmmParams& params) {
  const Eigen::VectorXd means = pmf_means(params.pmfs);
  std::vector<int> order(static_cast<std::size_t>(params.states()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return means(a) < means(b); });
  return order;
}

HmmParams canonicalize(const HmmParams& params) {
  const auto order = canonical_order(params);
  return permute_states(params, order);
}

Simulation simulate(const HmmParams& params, std::size_t length, std::uint64_t seed) {
  params.validate();
  if (length < 1) throw ConfigError("simulation length must be at least 1");

  auto rows_of = [](const Eigen::MatrixXd& m) {
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) rows[i].assign(m.row(i).begin(), m.row(i).end());
    return rows;
  };
  const auto gamma_rows = rows_of(params.gamma);
  const auto pmf_rows = rows_of(params.pmfs);
  const std::vector<double> delta(params.delta.begin(), params.delta.end());

  Rng rng(seed);
  std::vector<int> states(length);
  std::vector<int> counts(length);
  int s = static_cast<int>(rng.categorical(delta));
  for (std::size_t t = 0; t < length; ++t) {
    if (t > 0) s = static_cast<int>(rng.categorical(gamma_rows[static_cast<std::size_t>(s)]));
    states[t] = s;
    counts[t] = static_cast<int>(rng.categorical(pmf_rows[static_cast<std::size_t>(s)]));
  }
  return {std::move(states), CountSeries(std::move(counts), params.support_bound())};
}

}  // namespace nphmm
