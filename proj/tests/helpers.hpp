#pragma once

#include <cmath>
#include <vector>

#include "arl/rng.hpp"
#include "arl/signature.hpp"
#include "arl/tensor_algebra.hpp"

namespace arl::testing {

inline TruncTensor random_lie(int c, int k, double scale, StreamRng& rng) {
  TruncTensor x = TruncTensor::zero(c, k);
  for (std::size_t i = 1; i < x.size(); ++i) x[i] = scale * rng.normal();
  return x;
}

inline TruncTensor random_group(int c, int k, double scale, StreamRng& rng) {
  TruncTensor g = testing::random_lie(c, k, scale, rng);
  g[0] = 1.0;
  return g;
}

/// Random path with `n` steps in R^d on irregular times, some steps flagged as jumps.
inline CadlagPath random_path(int d, std::size_t n, StreamRng& rng, double jump_prob = 0.2, double t0 = 0.0) {
  CadlagPath p(d);
  std::vector<double> x(static_cast<std::size_t>(d));
  double t = t0;
  for (auto& v : x) v = rng.normal();
  p.push_back(t, x);
  for (std::size_t i = 0; i < n; ++i) {
    t += 0.05 + 0.1 * rng.uniform();
    const bool jump = rng.uniform() < jump_prob;
    for (auto& v : x) v += (jump ? 0.5 : 0.2) * rng.normal();
    p.push_back(t, x, jump);
  }
  return p;
}

}  // namespace arl::testing
