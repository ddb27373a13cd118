#ifndef ARL_ANALYSIS_HPP
#define ARL_ANALYSIS_HPP

// Numerical checks on the learned objects: Bellman contraction in the
// whitened distance, fixed-point iteration, forecast error growth and
// whitened-norm behaviour under jump stress.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "arl/anjd_env.hpp"
#include "arl/errors.hpp"
#include "arl/kernelspace.hpp"
#include "arl/proxy_flow.hpp"
#include "arl/rng.hpp"
#include "arl/tensor_algebra.hpp"

namespace arl {

/// Return-law encoding: reward-channel mean plus the full compressed proxy.
struct LawEncoding {
  double mean = 0.0;
  Vector proxy;
};

/// sqrt((mu1 - mu2)^2 + ||u1 - u2||_Q^2).
inline double law_distance(const AvnsgMetric& metric, const LawEncoding& a, const LawEncoding& b) {
  const double dm = a.mean - b.mean;
  return std::sqrt(dm * dm + q_norm_squared(metric, a.proxy - b.proxy));
}

/// eta -> (r + gamma mu, c + gamma P u): a shared reward shift and discounted
/// shared push-forward.
struct BellmanOperator {
  double reward = 0.0;
  double gamma = 0.99;
  Vector offset;      // c
  Matrix transition;  // P

  LawEncoding operator()(const LawEncoding& eta) const {
    return {reward + gamma * eta.mean, offset + gamma * (transition * eta.proxy)};
  }

  /// Unique fixed point (mu*, u*).
  LawEncoding fixed_point() const {
    const auto m = transition.rows();
    return {reward / (1.0 - gamma), (Matrix::Identity(m, m) - gamma * transition).partialPivLu().solve(offset)};
  }
};

/// Operator norm of P in the Q-norm: ||Q^{1/2} P Q^{-1/2}||_2.
inline double q_operator_norm(const AvnsgMetric& metric, const Matrix& p) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(metric.precision);
  const Vector s = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Matrix half = eig.eigenvectors() * s.asDiagonal() * eig.eigenvectors().transpose();
  const Matrix half_inv = eig.eigenvectors() * s.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
  Eigen::JacobiSVD<Matrix> svd(half * p * half_inv);
  return svd.singularValues()(0);
}

/// Random transition with Q-operator norm exactly `norm`.
inline Matrix random_q_nonexpansive(const AvnsgMetric& metric, double norm, std::uint64_t seed) {
  const auto m = metric.dim();
  StreamRng rng(seed, 0xC0'7A'C7ull);
  Matrix b(m, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index i = 0; i < m; ++i) b(i, j) = rng.normal();
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(metric.precision);
  const Vector s = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Matrix half = eig.eigenvectors() * s.asDiagonal() * eig.eigenvectors().transpose();
  const Matrix half_inv = eig.eigenvectors() * s.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
  Eigen::JacobiSVD<Matrix> svd(b);
  const Matrix scaled = b * (norm / svd.singularValues()(0));
  return half_inv * scaled * half;
}

struct ContractionReport {
  double max_ratio = 0.0;
  double mean_ratio = 0.0;
  std::size_t trials = 0;
  std::size_t skipped = 0;
  double transition_norm = 0.0;
  double gamma = 0.0;
  bool holds = false;
};

/// Ratios d_Q(T eta1, T eta2) / d_Q(eta1, eta2) over random pairs.
inline ContractionReport contraction_check(const BellmanOperator& op, const AvnsgMetric& metric, std::size_t trials,
                                           std::uint64_t seed, double spread = 1.0) {
  ContractionReport rep;
  rep.gamma = op.gamma;
  rep.transition_norm = q_operator_norm(metric, op.transition);
  const auto m = metric.dim();
  double sum = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    StreamRng rng(seed, t);
    LawEncoding a{spread * rng.normal(), Vector(m)};
    LawEncoding b{spread * rng.normal(), Vector(m)};
    for (Eigen::Index i = 0; i < m; ++i) a.proxy(i) = spread * rng.normal();
    for (Eigen::Index i = 0; i < m; ++i) b.proxy(i) = spread * rng.normal();
    const double before = law_distance(metric, a, b);
    if (before == 0.0) {
      ++rep.skipped;
      continue;
    }
    const double ratio = law_distance(metric, op(a), op(b)) / before;
    rep.max_ratio = std::max(rep.max_ratio, ratio);
    sum += ratio;
    ++rep.trials;
  }
  rep.mean_ratio = rep.trials ? sum / static_cast<double>(rep.trials) : 0.0;
  rep.holds = rep.max_ratio <= op.gamma + 1e-9;
  return rep;
}

/// Least-squares slope of ys against xs.
inline double fit_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2) throw InsufficientDataError("fit_slope: need at least 2 points");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  if (sxx == 0.0) throw InsufficientDataError("fit_slope: abscissae are all equal");
  return sxy / sxx;
}

struct FixedPointRun {
  LawEncoding limit;
  int iterations = 0;
  std::vector<double> distances;  // d_Q(eta_{k+1}, eta_k)
  double rate = 0.0;
};

/// Banach iteration until successive distance < tol.  The rate is the
/// geometric fit exp(slope of log distance) over the tail of the run.
inline FixedPointRun fixed_point_iterate(const std::function<LawEncoding(const LawEncoding&)>& op, LawEncoding eta,
                                         const AvnsgMetric& metric, double tol, int max_iterations = 100000) {
  if (!(tol > 0.0)) throw ConfigurationError("fixed_point_iterate: tol must be > 0");
  FixedPointRun run;
  for (int it = 0; it < max_iterations; ++it) {
    LawEncoding next = op(eta);
    const double d = law_distance(metric, next, eta);
    run.distances.push_back(d);
    if (d < tol) {
      run.limit = std::move(eta);
      run.iterations = it;
      std::vector<double> xs, ys;
      const std::size_t start = run.distances.size() / 2;
      for (std::size_t i = start; i < run.distances.size(); ++i) {
        if (run.distances[i] > 0.0) {
          xs.push_back(static_cast<double>(i));
          ys.push_back(std::log(run.distances[i]));
        }
      }
      run.rate = xs.size() >= 2 ? std::exp(fit_slope(xs, ys)) : 0.0;
      return run;
    }
    eta = std::move(next);
  }
  throw NumericError("fixed_point_iterate: no convergence within " + std::to_string(max_iterations) + " iterations");
}

struct DecayCurve {
  std::vector<double> times;
  std::vector<double> errors;       // d_Q(compress(phi_s), compress(S_bar_{t,s}))
  std::vector<double> proxy_norms;  // ||compress(phi_s)||_Q
  double slope = 0.0;               // d log e / ds
  double max_proxy_norm = 0.0;
  bool diverged = false;
};

/// Forecast error of a flow against the environment's running mean signature.
inline DecayCurve forecast_decay(const ProxyTrajectory& traj, const std::vector<TruncTensor>& env_running_mean,
                                 const NystromMap& map, const AvnsgMetric& metric) {
  if (env_running_mean.size() != traj.elements.size()) throw DimensionError("forecast_decay: grids differ");
  DecayCurve c;
  std::vector<double> xs, ys;
  for (std::size_t j = 0; j < traj.elements.size(); ++j) {
    const Vector u = map.compress(traj.elements[j]);
    const double e = q_distance(metric, u, map.compress(env_running_mean[j]));
    const double nrm = q_norm(metric, u);
    c.times.push_back(traj.grid[j]);
    c.errors.push_back(e);
    c.proxy_norms.push_back(nrm);
    c.max_proxy_norm = std::max(c.max_proxy_norm, nrm);
    if (!std::isfinite(e) || !std::isfinite(nrm)) c.diverged = true;
    if (e > 0.0 && std::isfinite(e)) {
      xs.push_back(traj.grid[j]);
      ys.push_back(std::log(e));
    }
  }
  c.slope = xs.size() >= 2 ? fit_slope(xs, ys) : 0.0;
  return c;
}

/// Mean log separation rate of two paths started 1e-8 apart on common noise.
inline double lyapunov_estimate(const EnsembleSpec& spec, std::size_t seeds, double separation = 1e-8) {
  validate_spec(spec);
  double total = 0.0;
  const double span = spec.grid.back() - spec.grid.front();
  for (std::size_t s = 0; s < seeds; ++s) {
    EnsembleSpec a = spec;
    EnsembleSpec b = spec;
    b.junction.x(0) += separation;
    const auto pa = simulate_path(a, s).first;
    const auto pb = simulate_path(b, s).first;
    const std::size_t last = pa.size() - 1;
    double d2 = 0.0;
    for (int i = 0; i < spec.params.dim(); ++i) {
      const double diff = pa.x(last)[static_cast<std::size_t>(i)] - pb.x(last)[static_cast<std::size_t>(i)];
      d2 += diff * diff;
    }
    total += std::log(std::max(std::sqrt(d2), 1e-300) / separation) / span;
  }
  return total / static_cast<double>(seeds);
}

struct StressRow {
  double jump_scale = 1.0;
  double raw_norm = 0.0;       // RMS over paths of ||compress(g)||_2
  double whitened_norm = 0.0;  // RMS over paths of ||compress(g)||_Q
  double raw_growth = 1.0;
  double whitened_growth = 1.0;
  double bound = 0.0;          // B / n sqrt(sum ||g||_Q^2)
};

/// Norm table across stress regimes; growth factors are relative to row 0.
/// `metrics` holds either one metric per regime (each fitted to its own
/// ensemble) or a single metric shared by all regimes.
inline std::vector<StressRow> whitened_norm_stress(const std::vector<double>& scales,
                                                   const std::vector<std::vector<TruncTensor>>& proxies,
                                                   const NystromMap& map, const std::vector<AvnsgMetric>& metrics,
                                                   double bound_b) {
  if (scales.size() != proxies.size() || scales.empty()) throw DimensionError("whitened_norm_stress: one proxy set per scale");
  if (metrics.size() != 1 && metrics.size() != scales.size()) {
    throw DimensionError("whitened_norm_stress: need one metric, or one per scale");
  }
  std::vector<StressRow> rows;
  for (std::size_t s = 0; s < scales.size(); ++s) {
    if (proxies[s].empty()) throw InsufficientDataError("whitened_norm_stress: empty proxy set");
    const AvnsgMetric& metric = metrics.size() == 1 ? metrics.front() : metrics[s];
    double raw2 = 0.0, q2 = 0.0;
    for (const auto& g : proxies[s]) {
      const Vector u = map.compress(g);
      raw2 += u.squaredNorm();
      q2 += q_norm_squared(metric, u);
    }
    const double n = static_cast<double>(proxies[s].size());
    StressRow r;
    r.jump_scale = scales[s];
    r.raw_norm = std::sqrt(raw2 / n);
    r.whitened_norm = std::sqrt(q2 / n);
    r.bound = bound_b / n * std::sqrt(q2);
    rows.push_back(r);
  }
  for (auto& r : rows) {
    r.raw_growth = r.raw_norm / rows.front().raw_norm;
    r.whitened_growth = r.whitened_norm / rows.front().whitened_norm;
  }
  return rows;
}

}  // namespace arl

#endif  // ARL_ANALYSIS_HPP
