#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "nphmm/errors.hpp"
#include "nphmm/model.hpp"
#include "support.hpp"

namespace nphmm {
namespace {

Eigen::MatrixXd two_by_two(double a, double b, double c, double d) {
  Eigen::MatrixXd m(2, 2);
  m << a, b, c, d;
  return m;
}

TEST(CountSeries, RejectsValuesOutsideSupport) {
  EXPECT_THROW(CountSeries({0, 3, 4}, 3), ConfigError);
  EXPECT_THROW(CountSeries({0, -2}, 3), ConfigError);
  EXPECT_THROW(CountSeries({}, 3), ConfigError);
  EXPECT_NO_THROW(CountSeries({0, CountSeries::kMissing, 3}, 3));
}

TEST(CountSeries, MissingHelpers) {
  const CountSeries s({1, 2, CountSeries::kMissing, 4}, 5);
  EXPECT_EQ(s.observed_count(), 3u);
  EXPECT_EQ(s.max_observed(), 4);
  const std::vector<std::size_t> pos{0, 3};
  const CountSeries held = s.with_missing(pos);
  EXPECT_TRUE(held.missing(0));
  EXPECT_EQ(held[1], 2);
  EXPECT_TRUE(held.missing(3));
  const CountSeries kept = s.keep_only(pos);
  EXPECT_EQ(kept[0], 1);
  EXPECT_TRUE(kept.missing(1));
  EXPECT_EQ(kept[3], 4);
  EXPECT_THROW(s.with_support(3), ConfigError);
  EXPECT_EQ(s.with_support(9).support_bound(), 9);
}

TEST(Transforms, UniformGammaHasZeroLogits) {
  HmmParams p = make_stationary(Eigen::MatrixXd::Constant(2, 2, 0.5), Eigen::MatrixXd::Constant(2, 3, 1.0 / 3));
  const UnconstrainedParams u = to_unconstrained(p);
  EXPECT_NEAR(u.gamma_star.cwiseAbs().maxCoeff(), 0.0, 1e-15);
  EXPECT_NEAR(u.pmf_star.cwiseAbs().maxCoeff(), 0.0, 1e-15);
}

TEST(Transforms, OffDiagonalLogRatio) {
  HmmParams p = make_stationary(two_by_two(0.95, 0.05, 0.05, 0.95), Eigen::MatrixXd::Constant(2, 3, 1.0 / 3));
  const UnconstrainedParams u = to_unconstrained(p);
  EXPECT_NEAR(u.gamma_star(0, 1), std::log(0.05 / 0.95), 1e-14);
  EXPECT_NEAR(u.gamma_star(0, 1), -2.9444, 1e-4);
  EXPECT_EQ(u.gamma_star(0, 0), 0.0);
  EXPECT_EQ(u.pmf_star(1, 0), 0.0);
  EXPECT_TRUE(u.stationary());
}

TEST(Transforms, ZeroProbabilityIsFloored) {
  Eigen::MatrixXd pmfs(1, 3);
  pmfs << 0.5, 0.0, 0.5;
  HmmParams p = make_stationary(Eigen::MatrixXd::Ones(1, 1), pmfs);
  const UnconstrainedParams u = to_unconstrained(p);
  EXPECT_TRUE(std::isfinite(u.pmf_star(0, 1)));
  const HmmParams back = from_unconstrained(u, true);
  EXPECT_NEAR((back.pmfs - pmfs).cwiseAbs().maxCoeff(), 0.0, 1e-11);
}

TEST(Transforms, ZeroVectorsGiveUniformRows) {
  const Eigen::VectorXd free = Eigen::VectorXd::Zero(UnconstrainedParams::free_count(2, 2, false));
  const HmmParams p = from_unconstrained(UnconstrainedParams::unpack(free, 2, 2, false), false);
  EXPECT_NEAR((p.gamma - Eigen::MatrixXd::Constant(2, 2, 0.5)).cwiseAbs().maxCoeff(), 0.0, 1e-15);
  EXPECT_NEAR((p.pmfs - Eigen::MatrixXd::Constant(2, 3, 1.0 / 3)).cwiseAbs().maxCoeff(), 0.0, 1e-15);
  EXPECT_NEAR((p.delta - Eigen::VectorXd::Constant(2, 0.5)).cwiseAbs().maxCoeff(), 0.0, 1e-15);
}

TEST(Transforms, InverseOfHandLogits) {
  UnconstrainedParams u;
  u.gamma_star = two_by_two(0.0, std::log(1.0 / 19), std::log(1.0 / 19), 0.0);
  u.pmf_star = Eigen::MatrixXd::Zero(2, 2);
  const HmmParams p = from_unconstrained(u, true);
  EXPECT_NEAR((p.gamma - two_by_two(0.95, 0.05, 0.05, 0.95)).cwiseAbs().maxCoeff(), 0.0, 1e-15);
}

TEST(Transforms, PackLayoutAndCount) {
  EXPECT_EQ(UnconstrainedParams::free_count(3, 4, true), 3 * 2 + 3 * 4);
  EXPECT_EQ(UnconstrainedParams::free_count(3, 4, false), 3 * 2 + 2 + 3 * 4);
  UnconstrainedParams u;
  u.gamma_star = two_by_two(0.0, 1.0, 2.0, 0.0);
  u.delta_star = Eigen::Vector2d(0.0, 3.0);
  u.pmf_star = two_by_two(0.0, 4.0, 0.0, 5.0);
  const Eigen::VectorXd x = u.pack();
  ASSERT_EQ(x.size(), 5);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(x(i), i + 1.0);
  const UnconstrainedParams back = UnconstrainedParams::unpack(x, 2, 1, false);
  EXPECT_EQ(back.gamma_star, u.gamma_star);
  EXPECT_EQ(back.delta_star, u.delta_star);
  EXPECT_EQ(back.pmf_star, u.pmf_star);
}

TEST(Transforms, RoundTripProperty) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(4));
    const int k = 1 + static_cast<int>(rng.below(8));
    const bool stationary = rng.below(2) == 0;
    const HmmParams p = testing::random_params(rng, n, k, stationary);
    const HmmParams back = from_unconstrained(to_unconstrained(p), stationary);
    EXPECT_NEAR((back.gamma - p.gamma).cwiseAbs().maxCoeff(), 0.0, 1e-12);
    EXPECT_NEAR((back.pmfs - p.pmfs).cwiseAbs().maxCoeff(), 0.0, 1e-12);
    EXPECT_NEAR((back.delta - p.delta).cwiseAbs().maxCoeff(), 0.0, 1e-12);
  }
}

TEST(Softmax, SurvivesHugeLogits) {
  const Eigen::VectorXd p = softmax(Eigen::Vector3d(1000.0, 1000.0, -1000.0));
  EXPECT_NEAR(p(0), 0.5, 1e-15);
  EXPECT_NEAR(p(1), 0.5, 1e-15);
  EXPECT_EQ(p(2), 0.0);
}

TEST(Stationary, KnownChains) {
  const Eigen::VectorXd sym = stationary_distribution(two_by_two(0.95, 0.05, 0.05, 0.95));
  EXPECT_NEAR(sym(0), 0.5, 1e-14);
  const Eigen::VectorXd quake = stationary_distribution(two_by_two(0.934, 0.066, 0.128, 0.872));
  EXPECT_NEAR(quake(0), 0.660, 5e-4);
  EXPECT_NEAR(quake(1), 0.340, 5e-4);
  EXPECT_NEAR(quake(0), 0.128 / (0.066 + 0.128), 1e-14);
  const Eigen::VectorXd flat = stationary_distribution(Eigen::MatrixXd::Constant(2, 2, 0.5));
  EXPECT_NEAR(flat(0), 0.5, 1e-15);
}

TEST(Stationary, ReducibleChainThrows) {
  EXPECT_THROW(stationary_distribution(Eigen::MatrixXd::Identity(2, 2)), SingularChainError);
}

TEST(Stationary, BalanceProperty) {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(5));
    const Eigen::MatrixXd g = testing::random_stochastic(rng, n, n);
    const Eigen::VectorXd d = stationary_distribution(g);
    EXPECT_NEAR((g.transpose() * d - d).cwiseAbs().maxCoeff(), 0.0, 1e-13);
    EXPECT_NEAR(d.sum(), 1.0, 1e-14);
    EXPECT_GE(d.minCoeff(), 0.0);
  }
}

TEST(Params, ValidateCatchesBadRows) {
  HmmParams p = make_stationary(two_by_two(0.9, 0.1, 0.2, 0.8), Eigen::MatrixXd::Constant(2, 3, 1.0 / 3));
  EXPECT_NO_THROW(p.validate());
  p.gamma(0, 0) = 0.95;
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(Canonical, OrdersByPmfMean) {
  Eigen::MatrixXd pmfs(2, 3);
  pmfs << 0.0, 0.2, 0.8, 0.7, 0.2, 0.1;
  const HmmParams p = make_stationary(two_by_two(0.9, 0.1, 0.3, 0.7), pmfs);
  EXPECT_EQ(canonical_order(p), (std::vector<int>{1, 0}));
  const HmmParams c = canonicalize(p);
  EXPECT_EQ(c.pmfs.row(0), pmfs.row(1));
  EXPECT_DOUBLE_EQ(c.gamma(0, 0), 0.7);
  EXPECT_DOUBLE_EQ(c.gamma(0, 1), 0.3);
  EXPECT_NEAR(c.delta(0), p.delta(1), 1e-15);
}

TEST(Simulate, PointMassesReproduceStates) {
  Eigen::MatrixXd pmfs = Eigen::MatrixXd::Zero(3, 6);
  pmfs(0, 1) = pmfs(1, 3) = pmfs(2, 5) = 1.0;
  Rng rng(2);
  const HmmParams p = make_stationary(testing::random_stochastic(rng, 3, 3), pmfs);
  const Simulation sim = simulate(p, 400, 9);
  const int emitted[] = {1, 3, 5};
  for (std::size_t t = 0; t < 400; ++t) EXPECT_EQ(sim.counts[t], emitted[sim.states[t]]);
}

TEST(Simulate, AbsorbingStart) {
  HmmParams p;
  p.gamma = Eigen::MatrixXd::Identity(2, 2);
  p.delta = Eigen::Vector2d(1.0, 0.0);
  p.pmfs = Eigen::MatrixXd::Constant(2, 4, 0.25);
  p.stationary = false;
  const Simulation sim = simulate(p, 200, 3);
  EXPECT_TRUE(std::all_of(sim.states.begin(), sim.states.end(), [](int s) { return s == 0; }));
}

TEST(Simulate, StateFrequencyMatchesStationaryDistribution) {
  const HmmParams p = make_stationary(two_by_two(0.95, 0.05, 0.05, 0.95), Eigen::MatrixXd::Constant(2, 5, 0.2));
  const Simulation sim = simulate(p, 100000, 123);
  const double share = std::count(sim.states.begin(), sim.states.end(), 0) / 100000.0;
  EXPECT_NEAR(share, p.delta(0), 0.01);
}

TEST(Simulate, SameSeedSameOutput) {
  Rng rng(8);
  const HmmParams p = testing::random_params(rng, 2, 6, true);
  const Simulation a = simulate(p, 300, 77);
  const Simulation b = simulate(p, 300, 77);
  const Simulation c = simulate(p, 300, 78);
  EXPECT_EQ(a.states, b.states);
  EXPECT_TRUE(std::equal(a.counts.values().begin(), a.counts.values().end(), b.counts.values().begin()));
  EXPECT_FALSE(std::equal(a.counts.values().begin(), a.counts.values().end(), c.counts.values().begin()));
}

TEST(Rng, UniformRangeAndMoments) {
  Rng rng(99);
  double sum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 100000, 0.5, 0.005);
}

TEST(Rng, CategoricalFrequencies) {
  Rng rng(4);
  const std::vector<double> w{1.0, 0.0, 3.0};
  std::vector<int> hits(3, 0);
  for (int i = 0; i < 40000; ++i) ++hits[rng.categorical(w)];
  EXPECT_EQ(hits[1], 0);
  EXPECT_NEAR(hits[0] / 40000.0, 0.25, 0.01);
}

TEST(Rng, DerivedSeedsDiffer) {
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
  EXPECT_EQ(derive_seed(5, 3), derive_seed(5, 3));
}

}  // namespace
}  // namespace nphmm
