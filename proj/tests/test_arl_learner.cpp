#include <gtest/gtest.h>

#include "arl/experiments.hpp"
#include "helpers.hpp"

using namespace arl;

namespace {
struct Case {
  RandomWalkCase rw;
  TdFeatures f;
};

Case make_case(std::size_t landmarks = 8, std::size_t steps = 50, std::uint64_t seed = 1) {
  RandomWalkCase rw = random_walk_case(3, 4, landmarks, steps, 0.3, seed);
  TdFeatures f = td_features(rw.trajectory, rw.map);
  return {std::move(rw), std::move(f)};
}

Vector random_vector(Eigen::Index n, std::uint64_t seed) {
  StreamRng rng(seed, 9);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.normal();
  return v;
}
}  // namespace

TEST(Features, TerminalColumnIsCompressedIdentity) {
  const Case c = make_case();
  EXPECT_LE((c.f.psi.col(50) - c.rw.map.compress(identity(3, 4))).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LE((c.f.psi.col(0) - c.f.terminal).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_EQ(c.f.index_of(c.f.grid[7]), 7u);
  EXPECT_THROW(c.f.index_of(0.0123), RangeError);
}

TEST(Features, PathFeaturesMatchTrajectoryOfPrefixSignatures) {
  StreamRng rng(2, 0);
  const CadlagPath path = arl::testing::random_path(2, 20, rng);
  SignatureOptions opts;
  opts.degree = 3;
  std::vector<TruncTensor> prefix;
  for (std::size_t j = 0; j < path.size(); ++j) prefix.push_back(path_signature(path, path.t(0), path.t(j), opts));
  const ProxyTrajectory traj = trajectory_from_elements(path.times(), prefix);
  std::vector<TruncTensor> lm;
  for (int i = 0; i < 12; ++i) lm.push_back(trunc_exp(arl::testing::random_lie(3, 3, 0.5, rng)));
  const NystromMap map = build_nystrom(lm, 1e-6, unit_level_weights(3));
  const TdFeatures a = td_features(traj, map);
  const TdFeatures b = path_td_features(path, opts, map);
  const double scale = a.psi.cwiseAbs().maxCoeff();
  EXPECT_LE((a.psi - b.psi).cwiseAbs().maxCoeff(), 1e-9 * scale);
  EXPECT_LE((a.segment - b.segment).cwiseAbs().maxCoeff(), 1e-9 * scale);
}

TEST(TdError, AnchorsAndTerminalPayoff) {
  const Case c = make_case();
  const Vector w = random_vector(8, 3);
  const Vector r = random_vector(50, 4);
  EXPECT_DOUBLE_EQ(value_at(c.f, w, 10), w.dot(c.f.psi.col(10)));
  EXPECT_DOUBLE_EQ(anticipatory_td_error(c.f, w, r, 49, 0.9, 2.5), r(49) + 0.9 * 2.5 - value_at(c.f, w, 49));
  EXPECT_DOUBLE_EQ(step_reward(c.f, w, 3), w.dot(c.f.segment.col(3)));
  EXPECT_THROW(anticipatory_td_error(c.f, w, r, 50, 0.9, 0.0), RangeError);
  EXPECT_THROW(anticipatory_td_error(c.f, w, r, 0, 1.5, 0.0), DomainError);
  EXPECT_THROW(value_at(c.f, Vector::Zero(3), 0), DimensionError);
  ValueWeights vw = ValueWeights::zeros(8);
  vw.w_z = w;
  EXPECT_DOUBLE_EQ(terminal_payoff(c.f, vw), w.dot(c.f.terminal));
  vw.z_constant = 1.25;
  EXPECT_EQ(terminal_payoff(c.f, vw), 1.25);
}

TEST(TdError, TelescopesWithUnitDiscount) {
  const Case c = make_case();
  const Vector w = random_vector(8, 5);
  const Vector r = random_vector(50, 6);
  const double z = 0.7;
  EXPECT_NEAR(anticipatory_td_errors(c.f, w, r, 1.0, z).sum(), r.sum() + z - value_at(c.f, w, 0), 1e-10);
}

TEST(TdError, ZeroDiscountIsRewardMinusValue) {
  const Case c = make_case();
  const Vector w = random_vector(8, 7);
  const Vector r = random_vector(50, 8);
  const Vector d = anticipatory_td_errors(c.f, w, r, 0.0, 3.0);
  for (Eigen::Index j = 0; j < 50; ++j) EXPECT_DOUBLE_EQ(d(j), r(j) - value_at(c.f, w, static_cast<std::size_t>(j)));
}

TEST(Realizable, PlantedWeightsAreExactFixedPoint) {
  const Case c = make_case();
  const Vector w = random_vector(8, 9);
  const Vector r = realizable_rewards(c.f, w, 0.99, 0.4);
  EXPECT_LE(anticipatory_td_errors(c.f, w, r, 0.99, 0.4).cwiseAbs().maxCoeff(), 1e-12);
  const TdSystem sys = assemble_system(c.f, r, 0.99, 0.4);
  EXPECT_LE((sys.A * w - sys.b).norm(), 1e-10 * sys.b.norm());
  const FixedPointSolution sol = solve_fixed_point(sys);
  EXPECT_LE(anticipatory_td_errors(c.f, sol.w, r, 0.99, 0.4).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE(sol.residual, 1e-10);
}

TEST(System, UpdateDirectionIsSumOfWeightedErrors) {
  const Case c = make_case();
  const Vector w = random_vector(8, 10);
  const Vector r = random_vector(50, 11);
  const TdSystem sys = assemble_system(c.f, r, 0.95, -0.3);
  const Vector delta = anticipatory_td_errors(c.f, w, r, 0.95, -0.3);
  const Vector direct = c.f.psi.leftCols(50) * delta;
  EXPECT_LE((sys.b - sys.A * w - direct).norm(), 1e-10 * direct.norm());
}

TEST(System, SingleStepHandComputed) {
  const Case c = make_case(8, 1, 12);
  const Vector r = Vector::Constant(1, 0.3);
  const TdSystem sys = assemble_system(c.f, r, 0.9, 2.0);
  const Vector p = c.f.psi.col(0);
  EXPECT_LE((sys.A - p * p.transpose()).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LE((sys.b - (0.3 + 0.9 * 2.0) * p).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_THROW(assemble_system(c.f, Vector::Zero(2), 0.9, 0.0), DimensionError);
}

TEST(Stability, BoundAnchors) {
  EXPECT_NEAR(stability_bound(Matrix::Identity(4, 4)), 2.0, 1e-12);
  Matrix d = Matrix::Zero(3, 3);
  d.diagonal() << 4.0, 1.0, 0.0;
  EXPECT_NEAR(stability_bound(d), 0.5, 1e-12);
}

TEST(Sweep, IdentitySystemConvergesGeometrically) {
  // One grid step with psi_0 = e: A = e e^T.  Along e the error shrinks by |1 - alpha|e|^2|.
  const Case c = make_case(8, 1, 13);
  const Vector r = Vector::Constant(1, 1.0);
  const double e2 = c.f.psi.col(0).squaredNorm();
  SweepConfig cfg;
  cfg.gamma = 0.5;
  cfg.alpha = 0.5 / e2;
  cfg.max_iterations = 60;
  const SweepResult s = td0_sweep(c.f, Vector::Zero(8), r, 0.0, cfg);
  EXPECT_LE(s.trace.back().max_abs_delta, std::pow(0.5, 60) * 2.0);
}

TEST(Sweep, StaysAtFixedPoint) {
  const Case c = make_case();
  const Vector w = random_vector(8, 14);
  const Vector r = realizable_rewards(c.f, w, 0.99, 0.0);
  SweepConfig cfg;
  cfg.alpha = 1e-3;
  cfg.max_iterations = 100;
  const SweepResult s = td0_sweep(c.f, w, r, 0.0, cfg);
  EXPECT_LE((s.w_G - w).norm(), 1e-10 * w.norm());
}

TEST(Sweep, ConvergesToOracle) {
  const Case c = make_case();
  const Vector w = random_vector(8, 15);
  const Vector r = realizable_rewards(c.f, w, 0.99, 0.2);
  const TdSystem sys = assemble_system(c.f, r, 0.99, 0.2);
  const FixedPointSolution sol = solve_fixed_point(sys);
  SweepConfig cfg;
  cfg.gamma = 0.99;
  cfg.alpha = 0.5 * stability_bound(sys.A);
  cfg.max_iterations = 200000;
  cfg.tolerance = 1e-15;
  const SweepResult s = td0_sweep(c.f, Vector::Zero(8), r, 0.2, cfg);
  EXPECT_TRUE(s.converged);
  EXPECT_LE((s.w_G - sol.w).norm(), 1e-6 * sol.w.norm());
  EXPECT_LE(s.trace.back().objective, 1e-16 * s.trace.front().objective);
  EXPECT_LE(s.trace.back().max_abs_delta, 1e-9);
}

TEST(Sweep, DivergesAboveStabilityBound) {
  const Case c = make_case();
  const Vector r = random_vector(50, 16);
  const TdSystem sys = assemble_system(c.f, r, 0.99, 0.0);
  SweepConfig cfg;
  cfg.alpha = 3.0 * stability_bound(sys.A);
  cfg.max_iterations = 100000;
  EXPECT_THROW(td0_sweep(c.f, Vector::Zero(8), r, 0.0, cfg), NumericError);
  cfg.alpha = 0.0;
  EXPECT_THROW(td0_sweep(c.f, Vector::Zero(8), r, 0.0, cfg), ConfigurationError);
}

TEST(Sweep, SemiGradientDiffersFromResidualGradient) {
  const Case c = make_case();
  const Vector w = random_vector(8, 17);
  const Vector r = random_vector(50, 18);
  const double gamma = 0.9;
  const Vector delta = anticipatory_td_errors(c.f, w, r, gamma, 0.0);
  Vector full = Vector::Zero(8);
  for (Eigen::Index j = 0; j < 50; ++j) {
    const Vector next = j + 1 < 50 ? Vector(c.f.psi.col(j + 1)) : Vector(Vector::Zero(8));
    full += delta(j) * (c.f.psi.col(j) - gamma * next);
  }
  const Vector semi = c.f.psi.leftCols(50) * delta;
  EXPECT_GT((full - semi).norm(), 1e-3 * semi.norm());
  // The residual gradient agrees with a finite difference of the objective.
  auto objective = [&](const Vector& v) { return 0.5 * anticipatory_td_errors(c.f, v, r, gamma, 0.0).squaredNorm(); };
  Vector fd(8);
  for (Eigen::Index i = 0; i < 8; ++i) {
    Vector a = w, b = w;
    a(i) += 1e-6;
    b(i) -= 1e-6;
    fd(i) = (objective(a) - objective(b)) / 2e-6;
  }
  EXPECT_LE((fd + full).norm(), 1e-6 * full.norm());
}

TEST(RewardFit, RecoversPlantedWeights) {
  StreamRng rng(19, 0);
  Matrix x(400, 6);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < 6; ++j) x(i, j) = rng.normal();
  }
  const Vector w = random_vector(6, 20);
  const Vector y = x * w;
  const RewardFit fit = fit_reward_weights(x, y, 1e-12);
  EXPECT_LE((fit.w - w).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LE(fit.mse, 1e-18);
  double prev_norm = fit.w.norm(), prev_mse = fit.mse;
  for (double ridge : {1e-2, 1.0, 1e2, 1e4}) {
    const RewardFit f = fit_reward_weights(x, y, ridge);
    EXPECT_LE(f.w.norm(), prev_norm);
    EXPECT_GE(f.mse, prev_mse);
    prev_norm = f.w.norm();
    prev_mse = f.mse;
  }
  EXPECT_THROW(fit_reward_weights(x, y, 0.0), ConfigurationError);
  EXPECT_THROW(fit_reward_weights(Matrix(0, 6), Vector(), 1.0), InsufficientDataError);
}

TEST(Classical, RealizableEpisodeHasZeroErrors) {
  const Case c = make_case();
  const Vector w = random_vector(8, 21);
  const Episode ep{c.f, realizable_rewards(c.f, w, 0.99, 0.1), 0.1};
  const ClassicalResult res = classical_td0_baseline({ep, ep}, w, 0.99, 1e-3, 3);
  EXPECT_LE(res.deltas.cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE((res.w - w).norm(), 1e-10 * w.norm());
  EXPECT_THROW(classical_td0_baseline({}, w, 0.99, 1e-3, 1), InsufficientDataError);
  EXPECT_THROW(classical_td0_baseline({ep}, w, 0.99, 1e-3, 0), ConfigurationError);
}

TEST(Classical, ZeroDiscountFirstPassErrors) {
  const Case c = make_case(8, 5, 22);
  const Vector r = random_vector(5, 23);
  const ClassicalResult res = classical_td0_baseline({Episode{c.f, r, 0.0}}, Vector::Zero(8), 0.0, 1e-9, 1);
  for (Eigen::Index j = 0; j < 5; ++j) EXPECT_NEAR(res.deltas(0, j), r(j), 1e-6 * std::abs(r(j)) + 1e-12);
}

TEST(Variance, CompareAnchors) {
  std::vector<double> a(40), b(40);
  for (int i = 0; i < 40; ++i) {
    a[static_cast<std::size_t>(i)] = (i % 2 == 0) ? 1.0 : -1.0;
    b[static_cast<std::size_t>(i)] = (i % 2 == 0) ? 2.0 : -2.0;
  }
  const VarianceReport r = variance_compare(a, b);
  EXPECT_NEAR(r.ratio, 0.25, 1e-15);
  EXPECT_TRUE(r.reduced);
  EXPECT_NEAR(sample_variance(a), 40.0 / 39.0, 1e-15);
  EXPECT_THROW(variance_compare(std::vector<double>(10, 0.0), b), InsufficientDataError);
}

TEST(Realizable, ExperimentDriverIsDeterministic) {
  const Case c = make_case();
  TdConfig tc;
  tc.gamma = 0.99;
  tc.alpha = 0.0;
  tc.max_iterations = 20000;
  tc.tolerance = 1e-14;
  const TdOutcome a = run_td_realizable(c.rw.trajectory, c.rw.map, tc, 77);
  const TdOutcome b = run_td_realizable(c.rw.trajectory, c.rw.map, tc, 77);
  EXPECT_EQ(a.sweep.w_G, b.sweep.w_G);
  EXPECT_LE(a.max_abs_delta_oracle, 1e-10);
}
