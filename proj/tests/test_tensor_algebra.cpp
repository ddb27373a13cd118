#include <gtest/gtest.h>

#include <numeric>

#include "arl/tensor_algebra.hpp"
#include "helpers.hpp"

using namespace arl;
using arl::testing::random_group;
using arl::testing::random_lie;

TEST(TensorShape, LevelBlocksArePowersOfChannels) {
  const TruncTensor g = identity(2, 2);
  ASSERT_EQ(g.size(), 7u);
  EXPECT_EQ(g.level(0).size(), 1u);
  EXPECT_EQ(g.level(1).size(), 2u);
  EXPECT_EQ(g.level(2).size(), 4u);
  EXPECT_EQ(g[0], 1.0);
  for (std::size_t i = 1; i < g.size(); ++i) EXPECT_EQ(g[i], 0.0);
}

TEST(TensorShape, FlatLengths) {
  EXPECT_EQ(tensor_size(5, 4), 781u);
  EXPECT_EQ(tensor_size(3, 4), 121u);
  EXPECT_EQ(tensor_size(1, 6), 7u);
  for (int c = 1; c <= 4; ++c) {
    for (int k = 0; k <= 4; ++k) {
      std::size_t expect = 0;
      for (int i = 0; i <= k; ++i) expect += static_cast<std::size_t>(std::pow(c, i));
      EXPECT_EQ(tensor_size(c, k), expect);
    }
  }
}

TEST(TensorShape, WordIndexIsRowMajor) {
  const TruncTensor g = identity(3, 3);
  const int w[] = {1, 2};
  EXPECT_EQ(g.index_of(w), g.offset(2) + 1 * 3 + 2);
  const int w3[] = {2, 0, 1};
  EXPECT_EQ(g.index_of(w3), g.offset(3) + 2 * 9 + 0 * 3 + 1);
}

TEST(Product, UnitLaws) {
  StreamRng rng(1, 0);
  for (int t = 0; t < 20; ++t) {
    const TruncTensor g = random_group(3, 4, 0.5, rng);
    EXPECT_LE(max_abs_diff(trunc_product(identity(3, 4), g), g), 0.0);
    EXPECT_LE(max_abs_diff(trunc_product(g, identity(3, 4)), g), 0.0);
  }
}

TEST(Product, AssociativeOnRandomTriples) {
  StreamRng rng(2, 0);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const TruncTensor a = random_group(3, 4, 0.5, rng);
    const TruncTensor b = random_group(3, 4, 0.5, rng);
    const TruncTensor c = random_group(3, 4, 0.5, rng);
    worst = std::max(worst, max_abs_diff(trunc_product(trunc_product(a, b), c), trunc_product(a, trunc_product(b, c))));
  }
  EXPECT_LE(worst, 1e-12);
}

TEST(Product, GroupLikeClosed) {
  StreamRng rng(3, 0);
  for (int t = 0; t < 100; ++t) {
    const TruncTensor p = trunc_product(random_group(2, 5, 1.0, rng), random_group(2, 5, 1.0, rng));
    EXPECT_EQ(p[0], 1.0);
  }
}

TEST(Product, ShapeMismatchThrows) {
  EXPECT_THROW(trunc_product(identity(2, 3), identity(3, 3)), DimensionError);
  EXPECT_THROW(trunc_product(identity(2, 3), identity(2, 2)), DimensionError);
}

TEST(Product, OneParameterSubgroupCommutes) {
  StreamRng rng(4, 0);
  TruncTensor v = TruncTensor::zero(3, 4);
  for (std::size_t i = 1; i <= 3; ++i) v[i] = rng.normal();
  EXPECT_LE(max_abs_diff(trunc_product(trunc_exp(v), trunc_exp(-v)), identity(3, 4)), 1e-14);
}

TEST(ExpLog, Anchors) {
  EXPECT_EQ(trunc_exp(TruncTensor::zero(2, 3)), identity(2, 3));
  EXPECT_LE(max_abs_diff(trunc_log(identity(2, 3)), TruncTensor::zero(2, 3)), 0.0);
  TruncTensor v = TruncTensor::zero(2, 3);
  v[1] = 0.7;
  v[2] = -1.3;
  const TruncTensor e = trunc_exp(v);
  // level 2 = v (x) v / 2
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      EXPECT_NEAR(e.level(2)[static_cast<std::size_t>(2 * i + j)], v[1 + static_cast<std::size_t>(i)] * v[1 + static_cast<std::size_t>(j)] / 2.0, 1e-15);
    }
  }
  EXPECT_LE(max_abs_diff(trunc_log(e), v), 1e-14);
}

TEST(ExpLog, RoundTrips) {
  StreamRng rng(5, 0);
  double worst_le = 0.0, worst_el = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const TruncTensor x = random_lie(3, 4, 0.5, rng);
    worst_le = std::max(worst_le, max_abs_diff(trunc_log(trunc_exp(x)), x));
    const TruncTensor g = random_group(3, 4, 0.2, rng);
    worst_el = std::max(worst_el, max_abs_diff(trunc_exp(trunc_log(g)), g));
  }
  EXPECT_LE(worst_le, 1e-12);
  EXPECT_LE(worst_el, 1e-12);
}

TEST(ExpLog, DomainChecks) {
  TruncTensor x = TruncTensor::zero(2, 2);
  x[0] = 0.5;
  EXPECT_THROW(trunc_exp(x), DomainError);
  EXPECT_THROW(trunc_log(TruncTensor::zero(2, 2)), DomainError);
}

TEST(Inverse, ExactOnRandomElements) {
  StreamRng rng(6, 0);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const TruncTensor g = random_group(3, 4, 1.0, rng);
    worst = std::max(worst, max_abs_diff(trunc_product(g, group_inverse(g)), identity(3, 4)));
    worst = std::max(worst, max_abs_diff(trunc_product(group_inverse(g), g), identity(3, 4)));
  }
  EXPECT_LE(worst, 1e-12);
  EXPECT_EQ(group_inverse(identity(2, 3)), identity(2, 3));
}

TEST(Inverse, ExpOfNegation) {
  StreamRng rng(7, 0);
  const TruncTensor x = random_lie(2, 4, 0.6, rng);
  EXPECT_LE(max_abs_diff(group_inverse(trunc_exp(x)), trunc_exp(-x)), 1e-13);
}

TEST(Inverse, ReversedPathSignature) {
  StreamRng rng(8, 0);
  // Random 5-segment piecewise-linear path in R^2 (no clock), and its reversal.
  std::vector<std::vector<double>> inc;
  for (int i = 0; i < 5; ++i) inc.push_back({rng.normal(), rng.normal(), rng.normal()});
  TruncTensor fwd = identity(3, 4), bwd = identity(3, 4);
  for (const auto& v : inc) fwd = multiply_by_exp_level1(fwd, v);
  for (auto it = inc.rbegin(); it != inc.rend(); ++it) {
    std::vector<double> neg(it->size());
    std::transform(it->begin(), it->end(), neg.begin(), [](double a) { return -a; });
    bwd = multiply_by_exp_level1(bwd, neg);
  }
  EXPECT_LE(max_abs_diff(group_inverse(fwd), bwd), 1e-12);
}

TEST(Inverse, RequiresGroupLike) { EXPECT_THROW(group_inverse(TruncTensor::zero(2, 2)), DomainError); }

TEST(Inner, Anchors) {
  StreamRng rng(9, 0);
  const TruncTensor g = random_group(2, 3, 1.0, rng);
  const auto w = unit_level_weights(3);
  EXPECT_EQ(graded_inner(g, TruncTensor::zero(2, 3), w), 0.0);
  EXPECT_EQ(graded_inner(identity(2, 3), identity(2, 3), w), 1.0);
}

TEST(Inner, CauchySchwarz) {
  StreamRng rng(10, 0);
  for (const auto& w : {unit_level_weights(4), factorial_level_weights(4)}) {
    for (int t = 0; t < 200; ++t) {
      const TruncTensor a = random_group(3, 4, 1.0, rng);
      const TruncTensor b = random_group(3, 4, 1.0, rng);
      EXPECT_LE(std::abs(graded_inner(a, b, w)), graded_norm(a, w) * graded_norm(b, w) * (1 + 1e-14));
    }
  }
}

TEST(Projection, Homomorphism) {
  StreamRng rng(11, 0);
  for (int t = 0; t < 100; ++t) {
    const TruncTensor a = random_group(2, 5, 0.7, rng);
    const TruncTensor b = random_group(2, 5, 0.7, rng);
    for (int r = 0; r <= 5; ++r) {
      const TruncTensor lhs = project_to_degree(trunc_product(a, b), r);
      const TruncTensor rhs = project_to_degree(trunc_product(project_to_degree(a, r), project_to_degree(b, r)), r);
      EXPECT_LE(max_abs_diff(lhs, rhs), 1e-13);
    }
  }
}

TEST(ExpDerivative, MatchesFiniteDifference) {
  StreamRng rng(12, 0);
  const TruncTensor x = random_lie(3, 4, 0.4, rng);
  const TruncTensor dx = random_lie(3, 4, 1.0, rng);
  const double h = 1e-6;
  const TruncTensor fd = (trunc_exp(x + dx * h) - trunc_exp(x - dx * h)) * (1.0 / (2 * h));
  EXPECT_LE(max_abs_diff(trunc_exp_derivative(x, dx), fd), 1e-8);
}

TEST(LeftAdjoint, PairingIdentity) {
  StreamRng rng(13, 0);
  const TruncTensor a = random_group(2, 4, 0.8, rng);
  const TruncTensor u = random_lie(2, 4, 1.0, rng);
  const TruncTensor h = random_lie(2, 4, 1.0, rng);
  const auto va = left_multiplication_adjoint(a, u).coefficients();
  const auto ab = trunc_product(a, h).coefficients();
  const double lhs = std::inner_product(u.coefficients().begin(), u.coefficients().end(), ab.begin(), 0.0);
  const double rhs = std::inner_product(va.begin(), va.end(), h.coefficients().begin(), 0.0);
  EXPECT_NEAR(lhs, rhs, 1e-12 * std::max(1.0, std::abs(lhs)));
}

TEST(Csv, RoundTrip) {
  StreamRng rng(14, 0);
  const TruncTensor g = random_group(3, 3, 1.0, rng);
  EXPECT_EQ(from_csv_row(to_csv_row(g)), g);
}
