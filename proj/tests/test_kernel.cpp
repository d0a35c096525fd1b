#include <gtest/gtest.h>

#include <random>

#include "chainperturb/kernel.hpp"
#include "oracles.hpp"

using namespace chainperturb;

namespace {

FiniteKernel two_state(double beta) {
  RowMatrix m(2, 2);
  m << 1.0 - beta, beta, beta, 1.0 - beta;
  return FiniteKernel(m);
}

FiniteKernel two_state_perturbed(double beta, double eps) {
  RowMatrix m(2, 2);
  m << 1.0 - (beta - eps), beta - eps, beta + eps, 1.0 - (beta + eps);
  return FiniteKernel(m);
}

ProbDist dist(std::initializer_list<double> w) {
  Vector v(static_cast<Index>(w.size()));
  Index i = 0;
  for (double x : w) v(i++) = x;
  return ProbDist(v);
}

ProbDist random_dist(Index n, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = u(gen);
  return ProbDist::normalized(v / v.sum());
}

}  // namespace

TEST(ProbDist, RejectsBadWeights) {
  EXPECT_THROW(dist({0.5, 0.6}), InvalidInput);
  EXPECT_THROW(dist({-0.1, 1.1}), InvalidInput);
  EXPECT_THROW(ProbDist{Vector()}, InvalidInput);
  EXPECT_NO_THROW(dist({0.25, 0.75}));
}

TEST(ProbDist, NormalizedAcceptsLoadTolerance) {
  Vector v(2);
  v << 0.5, 0.5 + 5e-10;
  const ProbDist p = ProbDist::normalized(v);
  EXPECT_NEAR(p.weights().sum(), 1.0, 1e-15);
  v << 0.5, 0.5 + 1e-6;
  EXPECT_THROW(ProbDist::normalized(v), InvalidInput);
}

TEST(FiniteKernel, RejectsNonSquareAndBadRows) {
  RowMatrix rect(2, 3);
  rect << 1, 0, 0, 0, 1, 0;
  EXPECT_THROW(FiniteKernel{rect}, DimensionMismatch);
  RowMatrix bad(2, 2);
  bad << 0.5, 0.4, 0.5, 0.5;
  EXPECT_THROW(FiniteKernel{bad}, InvalidInput);
  RowMatrix ok(2, 2);
  ok << 0.5, 0.5, 0.0, 1.0;
  EXPECT_THROW(FiniteKernel(ok, {"only-one"}), DimensionMismatch);
}

TEST(TvDistance, HandExamples) {
  EXPECT_DOUBLE_EQ(tv_distance(dist({1, 0}), dist({0, 1})), 1.0);
  EXPECT_DOUBLE_EQ(tv_distance(dist({0.5, 0.5}), dist({0.5, 0.5})), 0.0);
  EXPECT_NEAR(tv_distance(dist({0.5, 0.5}), dist({0.9, 0.1})), 0.4, 1e-15);
  EXPECT_THROW(tv_distance(dist({1, 0}), dist({1, 0, 0})), DimensionMismatch);
}

TEST(TvDistance, MatchesSubsetSupremumAndIsAMetric) {
  std::mt19937_64 gen(101);
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = 2 + trial % 7;
    const ProbDist p = random_dist(n, gen), q = random_dist(n, gen), r = random_dist(n, gen);
    const double pq = tv_distance(p, q);
    EXPECT_NEAR(pq, oracle::tv_by_subsets(oracle::to_vec(p.weights()), oracle::to_vec(q.weights())),
                1e-12);
    EXPECT_DOUBLE_EQ(pq, tv_distance(q, p));
    EXPECT_LE(tv_distance(p, r), pq + tv_distance(q, r) + 1e-12);
    EXPECT_NEAR(tv_distance(p, p), 0.0, 1e-12);
  }
}

TEST(Constants, TwoStateExample) {
  const FiniteKernel P = two_state(0.25);
  const FiniteKernel Pe = two_state_perturbed(0.25, 0.1);
  EXPECT_NEAR(doeblin_constant(P), 0.5, 1e-15);
  EXPECT_NEAR(local_epsilon(Pe, P), 0.1, 1e-15);
  // The off-diagonal row pair attains 1 - (2 beta - eps), so alpha = 0.4.
  EXPECT_NEAR(cross_doeblin_constant(Pe, P), 0.4, 1e-15);
  EXPECT_DOUBLE_EQ(local_epsilon(P, P), 0.0);
}

TEST(Constants, IdentityKernelHasNoDoeblinConstant) {
  EXPECT_DOUBLE_EQ(doeblin_constant(FiniteKernel(RowMatrix::Identity(2, 2))), 0.0);
  RowMatrix same(3, 3);
  same.rowwise() = Eigen::RowVector3d(0.2, 0.3, 0.5);
  EXPECT_DOUBLE_EQ(doeblin_constant(FiniteKernel(same)), 1.0);
}

TEST(Constants, MatchBruteForceOnRandomPairs) {
  std::mt19937_64 gen(202);
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = 2 + trial % 5;
    const FiniteKernel P(oracle::random_kernel(n, gen));
    const FiniteKernel Pe(oracle::random_perturbation(P.matrix(), 0.2, gen));
    const auto p = oracle::to_mat(P.matrix()), pe = oracle::to_mat(Pe.matrix());
    double worst_pp = 0, worst_cross = 0, worst_local = 0;
    for (Index x = 0; x < n; ++x) {
      worst_local = std::max(worst_local, oracle::tv_by_subsets(pe[x], p[x]));
      for (Index y = 0; y < n; ++y) {
        worst_pp = std::max(worst_pp, oracle::tv_by_subsets(p[x], p[y]));
        worst_cross = std::max(worst_cross, oracle::tv_by_subsets(pe[x], p[y]));
      }
    }
    EXPECT_NEAR(doeblin_constant(P), 1.0 - worst_pp, 1e-12);
    EXPECT_NEAR(local_epsilon(Pe, P), worst_local, 1e-12);
    EXPECT_NEAR(cross_doeblin_constant(Pe, P), 1.0 - worst_cross, 1e-12);
    EXPECT_DOUBLE_EQ(cross_doeblin_constant(P, P), doeblin_constant(P));
    EXPECT_GE(cross_doeblin_constant(Pe, P), doeblin_constant(P) - local_epsilon(Pe, P) - 1e-12);
  }
}

TEST(Constants, RequireMatchingSizes) {
  EXPECT_THROW(local_epsilon(two_state(0.2), FiniteKernel(RowMatrix::Identity(3, 3))),
               DimensionMismatch);
  EXPECT_THROW(cross_doeblin_constant(two_state(0.2), FiniteKernel(RowMatrix::Identity(3, 3))),
               DimensionMismatch);
}

TEST(TransferConstants, SubtractEpsilon) {
  EXPECT_NEAR(transfer_constants(TransferDirection::doeblin_to_cross, 0.5, 0.1), 0.4, 1e-15);
  EXPECT_NEAR(transfer_constants(TransferDirection::cross_to_doeblin, 0.4, 0.1), 0.3, 1e-15);
  EXPECT_DOUBLE_EQ(transfer_constants(TransferDirection::doeblin_to_cross, 0.5, 0.0), 0.5);
  EXPECT_THROW(transfer_constants(TransferDirection::doeblin_to_cross, 0.5, 0.5), InvalidRegime);
}

TEST(InvariantMeasure, KnownChains) {
  for (double beta : {0.05, 0.25, 0.5}) {
    const ProbDist mu = invariant_measure(two_state(beta));
    EXPECT_NEAR(mu[0], 0.5, 1e-14);
    EXPECT_NEAR(mu[1], 0.5, 1e-14);
  }
  RowMatrix y(2, 2);
  y << 0.9, 0.1, 0.4, 0.6;
  const ProbDist mu = invariant_measure(FiniteKernel(y));
  EXPECT_NEAR(mu[0], 0.8, 1e-14);
  EXPECT_NEAR(mu[1], 0.2, 1e-14);
}

TEST(InvariantMeasure, MatchesPowerIteration) {
  std::mt19937_64 gen(303);
  for (int trial = 0; trial < 20; ++trial) {
    const FiniteKernel P(oracle::random_kernel(5, gen));
    const StationarySolution s = solve_stationary(P);
    EXPECT_TRUE(s.unique);
    EXPECT_LE(s.residual_l1, 1e-12);
    const auto ref = oracle::stationary_by_iteration(oracle::to_mat(P.matrix()));
    for (Index i = 0; i < 5; ++i) EXPECT_NEAR(s.mu[i], ref[i], 1e-10);
  }
}

TEST(InvariantMeasure, FlagsReducibleChains) {
  const StationarySolution s = solve_stationary(FiniteKernel(RowMatrix::Identity(3, 3)));
  EXPECT_FALSE(s.unique);
  EXPECT_LE(s.residual_l1, 1e-12);
}

TEST(FStarNorm, HandExamples) {
  EXPECT_DOUBLE_EQ(f_star_norm(StateFunction(Vector::LinSpaced(2, 0, 1))), 0.5);
  EXPECT_DOUBLE_EQ(f_star_norm(StateFunction(Vector::Constant(4, 3.0))), 0.0);
  Vector f(3);
  f << -3, 1, 5;
  EXPECT_DOUBLE_EQ(f_star_norm(StateFunction(f)), 4.0);
}

TEST(Poisson, TwoStateClosedForm) {
  Vector f(2);
  f << 0, 1;
  const StateFunction psi = poisson_solve(two_state(0.25), StateFunction(f));
  EXPECT_NEAR(psi[0], -1.0, 1e-13);
  EXPECT_NEAR(psi[1], 1.0, 1e-13);
  const StateFunction zero = poisson_solve(two_state(0.25), StateFunction(Vector::Constant(2, 7.0)));
  EXPECT_NEAR(zero.sup_norm(), 0.0, 1e-13);
}

TEST(Poisson, MatchesSeriesAndLemmaBound) {
  std::mt19937_64 gen(404);
  std::normal_distribution<double> g(0.0, 2.0);
  for (int trial = 0; trial < 25; ++trial) {
    const FiniteKernel P(oracle::random_kernel(4, gen));
    Vector f(4);
    for (Index i = 0; i < 4; ++i) f(i) = g(gen);
    const StateFunction psi = poisson_solve(P, StateFunction(f));
    const auto mu = oracle::stationary_by_iteration(oracle::to_mat(P.matrix()));
    const auto series = oracle::poisson_series(oracle::to_mat(P.matrix()), oracle::to_vec(f), mu);
    for (Index i = 0; i < 4; ++i) EXPECT_NEAR(psi[i], series[i], 1e-8);
    EXPECT_LE(psi.sup_norm(), 2.0 * f_star_norm(StateFunction(f)) / doeblin_constant(P) + 1e-12);
  }
}

TEST(Poisson, RequiresSpectralGap) {
  EXPECT_THROW(poisson_solve(FiniteKernel(RowMatrix::Identity(2, 2)),
                             StateFunction(Vector::LinSpaced(2, 0, 1))),
               NoSpectralGap);
}

TEST(AverageLaw, BasicIdentities) {
  const FiniteKernel P = two_state(0.3);
  const ProbDist nu = dist({0.9, 0.1});
  EXPECT_TRUE(n_step_average_law(nu, P, 1).weights().isApprox(nu.weights(), 1e-15));
  const ProbDist mu = invariant_measure(P);
  EXPECT_LE((n_step_average_law(mu, P, 37).weights() - mu.weights()).cwiseAbs().maxCoeff(),
            1e-14);
  EXPECT_THROW(n_step_average_law(nu, P, 0), InvalidInput);
}

TEST(AverageLaw, MatchesPerturbedClosedFormPowers) {
  // (1/n) sum nu P_eps^k with P_eps^k from the two-state diagonalization.
  const double b = 0.25, e = 0.1, gamma = 0.8;
  const FiniteKernel Pe = two_state_perturbed(b, e);
  for (long long n : {1LL, 3LL, 10LL, 60LL}) {
    double first = 0.0;
    for (long long k = 0; k < n; ++k) {
      const double r = std::pow(1.0 - 2 * b, static_cast<double>(k));
      const double p00 = ((b + e) + (b - e) * r) / (2 * b);
      const double p10 = ((b + e) - (b + e) * r) / (2 * b);
      first += gamma * p00 + (1 - gamma) * p10;
    }
    first /= static_cast<double>(n);
    EXPECT_NEAR(n_step_average_law(dist({gamma, 1 - gamma}), Pe, n)[0], first, 1e-12);
  }
}

TEST(Contraction, GeometricInTv) {
  std::mt19937_64 gen(505);
  for (int trial = 0; trial < 20; ++trial) {
    const FiniteKernel P(oracle::random_kernel(4, gen));
    const double a = doeblin_constant(P);
    Vector v1 = random_dist(4, gen).weights(), v2 = random_dist(4, gen).weights();
    const double tv0 = 0.5 * (v1 - v2).cwiseAbs().sum();
    for (int n = 1; n <= 50; ++n) {
      v1 = P.push_forward(v1);
      v2 = P.push_forward(v2);
      EXPECT_LE(0.5 * (v1 - v2).cwiseAbs().sum(), std::pow(1 - a, n) * tv0 + 1e-10);
    }
  }
}

TEST(StationaryGap, BoundedByEpsilonOverA) {
  std::mt19937_64 gen(606);
  int checked = 0;
  while (checked < 30) {
    const FiniteKernel P(oracle::random_kernel(4, gen));
    const FiniteKernel Pe(oracle::random_perturbation(P.matrix(), 0.1, gen));
    const double a = doeblin_constant(P), eps = local_epsilon(Pe, P);
    if (!(a > eps)) continue;
    ++checked;
    EXPECT_LE(tv_distance(invariant_measure(P), invariant_measure(Pe)), eps / a + 1e-10);
  }
}

TEST(HittingTimes, MatchValueIteration) {
  std::mt19937_64 gen(707);
  for (int trial = 0; trial < 10; ++trial) {
    const FiniteKernel P(oracle::random_kernel(5, gen));
    const Vector h = expected_hitting_times(P, {4});
    const auto ref = oracle::hitting_times_by_iteration(oracle::to_mat(P.matrix()),
                                                        {false, false, false, false, true});
    for (Index i = 0; i < 5; ++i) EXPECT_NEAR(h(i), ref[i], 1e-9);
    EXPECT_DOUBLE_EQ(h(4), 0.0);
  }
  EXPECT_NEAR(expected_hitting_times(two_state(0.25), {1})(0), 4.0, 1e-13);
  EXPECT_THROW(expected_hitting_times(two_state(0.25), {}), InvalidInput);
  EXPECT_THROW(expected_hitting_times(FiniteKernel(RowMatrix::Identity(2, 2)), {1}),
               NumericalFailure);
}
