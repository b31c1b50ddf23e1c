#include "nphmm/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/normal.hpp>

#include "nphmm/errors.hpp"
#include "nphmm/likelihood.hpp"

namespace nphmm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double safe_log(double p) { return p > 0.0 ? std::log(p) : -kInf; }

ForwardBackward smoothed(const HmmParams& params, const CountSeries& data) {
  params.validate();
  ForwardBackward fb = forward_backward(params.gamma, params.delta, params.pmfs, data, true);
  if (fb.impossible) throw NumericalError("observations have probability zero under the model");
  return fb;
}

}  // namespace

DecodeResult viterbi(const HmmParams& params, const CountSeries& data) {
  params.validate();
  if (params.support_bound() != data.support_bound()) throw ConfigError("support bound mismatch");
  const int n = params.states();
  const auto len = static_cast<Eigen::Index>(data.size());

  Eigen::MatrixXd log_gamma(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) log_gamma(i, j) = safe_log(params.gamma(i, j));
  auto log_emission = [&](Eigen::Index t, int i) {
    const int y = data[static_cast<std::size_t>(t)];
    return y == CountSeries::kMissing ? 0.0 : safe_log(params.pmfs(i, y));
  };

  // Backward recursion over best suffix scores, then a forward trace that
  // picks the smallest state among exact ties (lexicographic order).
  Eigen::MatrixXd suffix(len, n);
  suffix.row(len - 1).setZero();
  for (Eigen::Index t = len - 2; t >= 0; --t) {
    for (int i = 0; i < n; ++i) {
      double best = -kInf;
      for (int j = 0; j < n; ++j) best = std::max(best, log_gamma(i, j) + log_emission(t + 1, j) + suffix(t + 1, j));
      suffix(t, i) = best;
    }
  }

  DecodeResult result;
  result.states.resize(static_cast<std::size_t>(len));
  double best = -kInf;
  int state = 0;
  for (int i = 0; i < n; ++i) {
    const double s = safe_log(params.delta(i)) + log_emission(0, i) + suffix(0, i);
    if (s > best) {
      best = s;
      state = i;
    }
  }
  if (!std::isfinite(best)) throw NumericalError("every state path has probability zero");
  result.joint_log_prob = best;
  result.states[0] = state;
  for (Eigen::Index t = 1; t < len; ++t) {
    double top = -kInf;
    int next = 0;
    for (int j = 0; j < n; ++j) {
      const double s = log_gamma(state, j) + log_emission(t, j) + suffix(t, j);
      if (s > top) {
        top = s;
        next = j;
      }
    }
    state = next;
    result.states[static_cast<std::size_t>(t)] = state;
  }
  return result;
}

Eigen::MatrixXd state_posteriors(const HmmParams& params, const CountSeries& data) {
  const ForwardBackward fb = smoothed(params, data);
  Eigen::MatrixXd post = fb.filtered.cwiseProduct(fb.backward);
  for (Eigen::Index t = 0; t < post.rows(); ++t) post.row(t) /= post.row(t).sum();
  return post;
}

Eigen::MatrixXd conditional_pmfs(const HmmParams& params, const CountSeries& data) {
  const ForwardBackward fb = smoothed(params, data);
  Eigen::MatrixXd weights = fb.predicted.cwiseProduct(fb.backward);
  for (Eigen::Index t = 0; t < weights.rows(); ++t) weights.row(t) /= weights.row(t).sum();
  Eigen::MatrixXd cond = weights * params.pmfs;
  for (Eigen::Index t = 0; t < cond.rows(); ++t) cond.row(t) /= cond.row(t).sum();
  return cond;
}

double normal_quantile(double p) {
  if (p <= 0.0) return -kInf;
  if (p >= 1.0) return kInf;
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

PseudoResiduals pseudo_residuals(const HmmParams& params, const CountSeries& data) {
  for (std::size_t t = 0; t < data.size(); ++t)
    if (data.missing(t)) throw ConfigError("pseudo-residuals require a series without missing values");
  const Eigen::MatrixXd cond = conditional_pmfs(params, data);
  const auto len = cond.rows();
  const int k_max = params.support_bound();

  PseudoResiduals r;
  r.lower.resize(len);
  r.upper.resize(len);
  r.mid.resize(len);
  r.lower_saturated.assign(static_cast<std::size_t>(len), false);
  r.upper_saturated.assign(static_cast<std::size_t>(len), false);
  for (Eigen::Index t = 0; t < len; ++t) {
    const int y = data[static_cast<std::size_t>(t)];
    // Both tails are summed directly so that y = 0 and y = K give exact 0 and 1.
    double below = 0.0, above = 0.0;
    for (int c = 0; c < y; ++c) below += cond(t, c);
    for (int c = y + 1; c <= k_max; ++c) above += cond(t, c);
    const double lo = std::clamp(below, 0.0, 1.0);
    const double hi = std::clamp(1.0 - above, 0.0, 1.0);
    r.lower(t) = normal_quantile(lo);
    r.upper(t) = normal_quantile(hi);
    r.mid(t) = normal_quantile(0.5 * (lo + hi));
    r.lower_saturated[static_cast<std::size_t>(t)] = lo <= 0.0;
    r.upper_saturated[static_cast<std::size_t>(t)] = hi >= 1.0;
  }
  return r;
}

Eigen::VectorXd kld(const Eigen::MatrixXd& true_pmfs, const Eigen::MatrixXd& est_pmfs) {
  if (true_pmfs.rows() != est_pmfs.rows() || true_pmfs.cols() != est_pmfs.cols()) {
    throw ConfigError("KLD requires pmf matrices of equal shape");
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(true_pmfs.rows());
  for (Eigen::Index i = 0; i < true_pmfs.rows(); ++i) {
    for (Eigen::Index c = 0; c < true_pmfs.cols(); ++c) {
      const double p = true_pmfs(i, c);
      if (p > 0.0) out(i) += p * std::log(p / std::max(est_pmfs(i, c), kProbabilityFloor));
    }
  }
  return out;
}

Eigen::MatrixXd transition_mae(const Eigen::MatrixXd& est, const Eigen::MatrixXd& truth) {
  if (est.rows() != truth.rows() || est.cols() != truth.cols()) {
    throw ConfigError("transition matrices differ in shape");
  }
  Eigen::MatrixXd err = (est - truth).cwiseAbs();
  err.diagonal().setZero();
  return err;
}

std::vector<int> best_label_map(std::span<const int> decoded, std::span<const int> truth, int states) {
  if (decoded.size() != truth.size()) throw ConfigError("state sequences differ in length");
  std::vector<std::vector<std::size_t>> confusion(static_cast<std::size_t>(states),
                                                  std::vector<std::size_t>(static_cast<std::size_t>(states), 0));
  for (std::size_t t = 0; t < decoded.size(); ++t) {
    if (decoded[t] < 0 || decoded[t] >= states || truth[t] < 0 || truth[t] >= states) {
      throw ConfigError("state label out of range");
    }
    ++confusion[static_cast<std::size_t>(decoded[t])][static_cast<std::size_t>(truth[t])];
  }
  std::vector<int> perm(static_cast<std::size_t>(states));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  std::size_t best_agree = 0;
  bool first = true;
  do {
    std::size_t agree = 0;
    for (int d = 0; d < states; ++d) agree += confusion[static_cast<std::size_t>(d)][static_cast<std::size_t>(perm[static_cast<std::size_t>(d)])];
    if (first || agree > best_agree) {
      best_agree = agree;
      best = perm;
      first = false;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

double misclassification_rate(std::span<const int> decoded, std::span<const int> truth, int states) {
  if (decoded.empty()) return 0.0;
  const auto map = best_label_map(decoded, truth, states);
  std::size_t wrong = 0;
  for (std::size_t t = 0; t < decoded.size(); ++t)
    if (map[static_cast<std::size_t>(decoded[t])] != truth[t]) ++wrong;
  return static_cast<double>(wrong) / static_cast<double>(decoded.size());
}

std::vector<double> autocorrelation(std::span<const double> x, int max_lag) {
  double sum = 0.0;
  std::size_t count = 0;
  for (double v : x)
    if (std::isfinite(v)) {
      sum += v;
      ++count;
    }
  std::vector<double> acf;
  if (count == 0) return acf;
  const double mean = sum / static_cast<double>(count);
  auto cov = [&](std::size_t lag) {
    double c = 0.0;
    for (std::size_t t = 0; t + lag < x.size(); ++t)
      if (std::isfinite(x[t]) && std::isfinite(x[t + lag])) c += (x[t] - mean) * (x[t + lag] - mean);
    return c / static_cast<double>(count);
  };
  const double c0 = cov(0);
  for (int lag = 0; lag <= max_lag && static_cast<std::size_t>(lag) < x.size(); ++lag)
    acf.push_back(c0 > 0.0 ? cov(static_cast<std::size_t>(lag)) / c0 : (lag == 0 ? 1.0 : 0.0));
  return acf;
}

}  // namespace nphmm
