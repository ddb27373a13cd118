#include <gtest/gtest.h>

#include <sstream>

#include "arl/signature.hpp"
#include "helpers.hpp"

using namespace arl;
using arl::testing::random_path;

namespace {
SignatureOptions opts(int k = 4, InterpolationMode mode = InterpolationMode::rectilinear) {
  SignatureOptions o;
  o.degree = k;
  o.mode = mode;
  return o;
}
}  // namespace

TEST(Segment, ZeroIncrementIsIdentity) {
  const double dx[] = {0.0, 0.0};
  EXPECT_EQ(segment_signature(0.0, dx, opts()), identity(3, 4));
}

TEST(Segment, LevelOneIsIncrement) {
  const double dx[] = {0.3, -1.2};
  const TruncTensor g = segment_signature(0.5, dx, opts());
  EXPECT_EQ(g[1], 0.5);
  EXPECT_EQ(g[2], 0.3);
  EXPECT_EQ(g[3], -1.2);
}

TEST(Segment, NegativeTimeRejected) {
  const double dx[] = {0.0};
  EXPECT_THROW(segment_signature(-1.0, dx, opts()), DomainError);
}

TEST(Segment, JumpIsLimitOfSteepRamp) {
  // A linear ramp of duration eps from x to x + j approaches the Marcus jump
  // factor in every coordinate that does not involve the clock.
  const double j[] = {0.8, -0.4};
  SignatureOptions o = opts(3);
  const TruncTensor jump = segment_signature(0.0, j, o);
  SignatureOptions no_clock = o;
  no_clock.time_augment = false;
  double prev = 1e300;
  for (double eps : {1e-2, 1e-3, 1e-4, 1e-5, 1e-6}) {
    // Fine interpolation oracle: the ramp split into 64 pieces.
    TruncTensor ramp = identity(3, 3);
    for (int q = 0; q < 64; ++q) {
      const double piece[] = {j[0] / 64, j[1] / 64};
      ramp = trunc_product(ramp, segment_signature(eps / 64, piece, o));
    }
    double err = 0.0;
    double clock_err = 0.0;
    for (std::size_t i = 1; i < ramp.size(); ++i) {
      // Words containing letter 0 involve the clock.
      std::size_t lvl = 1, off = i;
      while (off >= ramp.offset(static_cast<int>(lvl)) + level_size(3, static_cast<int>(lvl))) ++lvl;
      std::size_t rel = off - ramp.offset(static_cast<int>(lvl));
      bool has_clock = false;
      for (std::size_t q = 0; q < lvl; ++q) {
        if (rel % 3 == 0) has_clock = true;
        rel /= 3;
      }
      (has_clock ? clock_err : err) = std::max(has_clock ? clock_err : err, std::abs(ramp[i] - jump[i]));
    }
    EXPECT_LE(err, 1e-12);
    EXPECT_LT(clock_err, prev);
    prev = clock_err;
  }
  EXPECT_LE(prev, 1e-5);
}

TEST(PathSignature, ConstantPathIsIdentity) {
  CadlagPath p(2);
  const double x[] = {1.0, 2.0};
  p.push_back(0.0, x);
  p.push_back(1.0, x);
  SignatureOptions o = opts();
  o.time_augment = false;
  EXPECT_EQ(path_signature(p, o), identity(3, 4));
}

TEST(PathSignature, LevelOneTelescopes) {
  StreamRng rng(1, 0);
  for (auto mode : {InterpolationMode::rectilinear, InterpolationMode::linear}) {
    const CadlagPath p = random_path(2, 12, rng);
    const TruncTensor g = path_signature(p, opts(4, mode));
    EXPECT_NEAR(g[1], p.end_time() - p.start_time(), 1e-14);
    EXPECT_NEAR(g[2], p.x(p.size() - 1)[0] - p.x(0)[0], 1e-13);
    EXPECT_NEAR(g[3], p.x(p.size() - 1)[1] - p.x(0)[1], 1e-13);
  }
}

TEST(PathSignature, ChenAtRandomSplits) {
  StreamRng rng(2, 0);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const auto mode = t % 2 ? InterpolationMode::linear : InterpolationMode::rectilinear;
    const CadlagPath p = random_path(2, 10, rng);
    const SignatureOptions o = opts(4, mode);
    const TruncTensor whole = path_signature(p, o);
    for (int s = 0; s < 5; ++s) {
      const double u = p.start_time() + rng.uniform() * (p.end_time() - p.start_time());
      const TruncTensor split = trunc_product(path_signature(p, p.start_time(), u, o), path_signature(p, u, p.end_time(), o));
      worst = std::max(worst, max_abs_diff(split, whole));
    }
  }
  EXPECT_LE(worst, 1e-12);
}

TEST(PathSignature, IntervalOutsideSpanThrows) {
  StreamRng rng(3, 0);
  const CadlagPath p = random_path(1, 3, rng);
  EXPECT_THROW(path_signature(p, p.start_time() - 1.0, p.end_time(), opts()), RangeError);
  EXPECT_THROW(path_signature(p, p.end_time(), p.start_time(), opts()), RangeError);
}

TEST(PathSignature, RetracingWithoutClockIsTreeLike) {
  StreamRng rng(4, 0);
  const CadlagPath p = random_path(2, 6, rng, 0.0);
  CadlagPath there_and_back(2);
  for (std::size_t i = 0; i < p.size(); ++i) there_and_back.push_back(p.t(i), p.x(i));
  double t = p.end_time();
  for (std::size_t i = p.size() - 1; i-- > 0;) {
    t += 0.1;
    there_and_back.push_back(t, p.x(i));
  }
  SignatureOptions o = opts(4, InterpolationMode::linear);
  o.time_augment = false;
  EXPECT_LE(max_abs_diff(path_signature(there_and_back, o), identity(3, 4)), 1e-12);
  o.time_augment = true;
  EXPECT_GT(max_abs_diff(path_signature(there_and_back, o), identity(3, 4)), 1e-3);
}

TEST(PathSignature, DistinctPathsHaveDistinctSignatures) {
  StreamRng rng(5, 0);
  std::vector<TruncTensor> sigs;
  for (int i = 0; i < 500; ++i) sigs.push_back(path_signature(random_path(1, 4, rng), opts()));
  double closest = 1e300;
  for (std::size_t a = 0; a < sigs.size(); ++a) {
    for (std::size_t b = a + 1; b < sigs.size(); ++b) closest = std::min(closest, max_abs_diff(sigs[a], sigs[b]));
  }
  EXPECT_GT(closest, 1e-8);
}

TEST(Filtering, StreamEqualsBatch) {
  StreamRng rng(6, 0);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const auto mode = t % 2 ? InterpolationMode::linear : InterpolationMode::rectilinear;
    const CadlagPath p = random_path(3, 20, rng, 0.3);
    worst = std::max(worst, max_abs_diff(filter_path(p, opts(4, mode)).sig, path_signature(p, opts(4, mode))));
  }
  EXPECT_LE(worst, 1e-10);
}

TEST(Filtering, ZeroIncrementObservationLeavesProxyUnchanged) {
  SignatureOptions o = opts();
  o.time_augment = false;
  const double x0[] = {0.5, 0.5};
  FilteredProxy p = make_filtered_proxy(0.0, x0, o);
  const double x1[] = {1.0, 0.0};
  p = incremental_update(p, 1.0, x1, false);
  const FilteredProxy q = incremental_update(p, 2.0, x1, false);
  EXPECT_EQ(q.sig, p.sig);
}

TEST(Filtering, SingleObservationIsSegment) {
  const SignatureOptions o = opts();
  const double x0[] = {0.1, 0.2};
  const double x1[] = {0.4, -0.3};
  const FilteredProxy p = incremental_update(make_filtered_proxy(1.0, x0, o), 1.5, x1, true);
  const double dx[] = {0.0, 0.3, -0.5};
  // Rectilinear: clock first, then the displacement.
  const double clock[] = {0.5, 0.0, 0.0};
  const TruncTensor expect = trunc_product(segment_signature(0.5, std::span<const double>(clock + 1, 2), o),
                                           segment_signature(0.0, std::span<const double>(dx + 1, 2), o));
  EXPECT_LE(max_abs_diff(p.sig, expect), 1e-15);
}

TEST(Filtering, OutOfOrderRejected) {
  const double x0[] = {0.0};
  const FilteredProxy p = make_filtered_proxy(1.0, x0, opts());
  EXPECT_THROW(incremental_update(p, 1.0, x0, false), OrderingError);
  const double bad[] = {0.0, 1.0};
  EXPECT_THROW(incremental_update(p, 2.0, bad, false), DimensionError);
}

TEST(PathsCsv, RoundTrip) {
  StreamRng rng(7, 0);
  std::vector<CadlagPath> paths{random_path(2, 5, rng), random_path(2, 3, rng)};
  std::stringstream ss;
  write_paths_csv(ss, paths);
  const auto back = read_paths_csv(ss);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t p = 0; p < 2; ++p) {
    ASSERT_EQ(back[p].size(), paths[p].size());
    for (std::size_t i = 0; i < paths[p].size(); ++i) {
      EXPECT_EQ(back[p].t(i), paths[p].t(i));
      EXPECT_EQ(back[p].jump(i), paths[p].jump(i));
      EXPECT_EQ(back[p].x(i)[1], paths[p].x(i)[1]);
    }
  }
}
