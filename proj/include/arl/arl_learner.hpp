#ifndef ARL_ARL_LEARNER_HPP
#define ARL_ARL_LEARNER_HPP

// Signature-linear value and reward functionals on compressed coordinates,
// TD(0) along the deterministic proxy flow, its closed-form fixed point and a
// sampled-transition TD(0) baseline.

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "arl/errors.hpp"
#include "arl/kernelspace.hpp"
#include "arl/proxy_flow.hpp"
#include "arl/tensor_algebra.hpp"

namespace arl {

struct ValueWeights {
  Vector w_G;
  Vector w_R;
  /// Terminal payoff z = <w_z, compress(phi_T)>, unless z_constant is set.
  Vector w_z;
  std::optional<double> z_constant;

  static ValueWeights zeros(Eigen::Index m) {
    return {Vector::Zero(m), Vector::Zero(m), Vector::Zero(m), std::nullopt};
  }

  void validate(Eigen::Index m) const {
    if (w_G.size() != m || w_R.size() != m || (!z_constant && w_z.size() != m)) {
      throw DimensionError("ValueWeights: dimensions must match the Nystrom map (" + std::to_string(m) + ")");
    }
    if (!w_G.allFinite() || !w_R.allFinite() || (!z_constant && !w_z.allFinite()) ||
        (z_constant && !std::isfinite(*z_constant))) {
      throw ConfigurationError("ValueWeights: weights must be finite");
    }
  }
};

/// Compressed residuals along one trajectory:
/// psi_j = compress(phi_j^{-1} phi_T), seg_j = compress(phi_j^{-1} phi_{j+1}).
struct TdFeatures {
  std::vector<double> grid;
  Matrix psi;       // m x (J+1)
  Matrix segment;   // m x J
  Vector terminal;  // compress(phi_T)

  std::size_t steps() const { return grid.size() - 1; }
  Eigen::Index dim() const { return psi.rows(); }

  std::size_t index_of(double s) const {
    for (std::size_t j = 0; j < grid.size(); ++j) {
      if (grid[j] == s) return j;
    }
    throw RangeError("TdFeatures: time " + std::to_string(s) + " is not on the grid");
  }
};

inline TdFeatures td_features(const ProxyTrajectory& traj, const NystromMap& map) {
  TdFeatures f;
  f.grid = traj.grid;
  const auto n = static_cast<Eigen::Index>(traj.elements.size());
  f.psi.resize(map.dim(), n);
  f.segment.resize(map.dim(), n - 1);
  const TruncTensor& T = traj.terminal();
  for (Eigen::Index j = 0; j < n; ++j) {
    const TruncTensor inv = group_inverse(traj.elements[static_cast<std::size_t>(j)]);
    f.psi.col(j) = map.compress(j + 1 == n ? identity(T.channels(), T.degree()) : trunc_product(inv, T));
    if (j + 1 < n) f.segment.col(j) = map.compress(trunc_product(inv, traj.elements[static_cast<std::size_t>(j) + 1]));
  }
  f.terminal = map.compress(T);
  return f;
}

/// Features of a single realised path: psi_j = compress(S_{s_j,T}) and
/// seg_j = compress(S_{s_j,s_{j+1}}).
inline TdFeatures path_td_features(const CadlagPath& path, const SignatureOptions& opts, const NystromMap& map) {
  const std::vector<TruncTensor> suffix = suffix_signatures(path, opts);
  TdFeatures f;
  f.grid = path.times();
  const auto n = static_cast<Eigen::Index>(suffix.size());
  f.psi.resize(map.dim(), n);
  f.segment.resize(map.dim(), n - 1);
  std::vector<double> scratch;
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto ju = static_cast<std::size_t>(j);
    f.psi.col(j) = map.compress(suffix[ju]);
    if (j + 1 < n) {
      TruncTensor step = identity(path.dim() + 1, opts.degree);
      detail::apply_step(step, path.t(ju), path.t(ju + 1), path.t(ju), path.t(ju + 1), path.x(ju), path.x(ju + 1),
                         path.jump(ju + 1), opts, scratch);
      f.segment.col(j) = map.compress(step);
    }
  }
  f.terminal = f.psi.col(0);
  return f;
}

inline double terminal_payoff(const TdFeatures& f, const ValueWeights& w) {
  return w.z_constant ? *w.z_constant : w.w_z.dot(f.terminal);
}

/// V(s_j) = <w_G, psi_j>.
inline double value_at(const TdFeatures& f, const Vector& w_G, std::size_t j) {
  if (j > f.steps()) throw RangeError("value_at: grid index out of range");
  if (w_G.size() != f.dim()) throw DimensionError("value_at: weight length mismatch");
  return w_G.dot(f.psi.col(static_cast<Eigen::Index>(j)));
}

/// Reward of the re-centred segment s_j -> s_{j+1}.
inline double step_reward(const TdFeatures& f, const Vector& w_R, std::size_t j) {
  if (j >= f.steps()) throw RangeError("step_reward: no segment starts at the terminal grid point");
  if (w_R.size() != f.dim()) throw DimensionError("step_reward: weight length mismatch");
  return w_R.dot(f.segment.col(static_cast<Eigen::Index>(j)));
}

inline Vector step_rewards(const TdFeatures& f, const Vector& w_R) {
  if (w_R.size() != f.dim()) throw DimensionError("step_rewards: weight length mismatch");
  return f.segment.transpose() * w_R;
}

/// r_j + gamma V(s_{j+1}) - V(s_j), with V(T) replaced by the payoff z.
inline double anticipatory_td_error(const TdFeatures& f, const Vector& w_G, const Vector& rewards, std::size_t j,
                                    double gamma, double z) {
  if (j >= f.steps()) throw RangeError("anticipatory_td_error: s must precede the horizon");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw DomainError("anticipatory_td_error: gamma must lie in [0, 1]");
  const double next = (j + 1 == f.steps()) ? z : value_at(f, w_G, j + 1);
  return rewards(static_cast<Eigen::Index>(j)) + gamma * next - value_at(f, w_G, j);
}

inline Vector anticipatory_td_errors(const TdFeatures& f, const Vector& w_G, const Vector& rewards, double gamma,
                                     double z) {
  Vector out(static_cast<Eigen::Index>(f.steps()));
  for (std::size_t j = 0; j < f.steps(); ++j) out(static_cast<Eigen::Index>(j)) = anticipatory_td_error(f, w_G, rewards, j, gamma, z);
  return out;
}

/// Rewards that make w_true an exact fixed point: r_j = V(s_j) - gamma V(s_{j+1}).
inline Vector realizable_rewards(const TdFeatures& f, const Vector& w_true, double gamma, double z) {
  Vector r(static_cast<Eigen::Index>(f.steps()));
  for (std::size_t j = 0; j < f.steps(); ++j) {
    const double next = (j + 1 == f.steps()) ? z : value_at(f, w_true, j + 1);
    r(static_cast<Eigen::Index>(j)) = value_at(f, w_true, j) - gamma * next;
  }
  return r;
}

struct TdSystem {
  Matrix A;
  Vector b;
  std::vector<double> grid;
  double gamma = 0.0;
  double z = 0.0;
};

inline TdSystem assemble_system(const TdFeatures& f, const Vector& rewards, double gamma, double z) {
  if (rewards.size() != static_cast<Eigen::Index>(f.steps())) throw DimensionError("assemble_system: one reward per step");
  const Eigen::Index m = f.dim();
  TdSystem sys{Matrix::Zero(m, m), Vector::Zero(m), f.grid, gamma, z};
  const auto J = static_cast<Eigen::Index>(f.steps());
  for (Eigen::Index j = 0; j < J; ++j) {
    const auto p = f.psi.col(j);
    if (j + 1 < J) {
      sys.A.noalias() += p * (p - gamma * f.psi.col(j + 1)).transpose();
    } else {
      sys.A.noalias() += p * p.transpose();
      sys.b += gamma * z * p;
    }
    sys.b += rewards(j) * p;
  }
  return sys;
}

/// Largest step with |1 - alpha lambda| < 1 for every eigenvalue of A.
/// Eigenvalues below `null_tol` times the largest modulus are null directions
/// the sweep never moves along, and are ignored.
inline double stability_bound(const Matrix& A, double null_tol = 1e-10) {
  Eigen::EigenSolver<Matrix> es(A, false);
  const double top = es.eigenvalues().cwiseAbs().maxCoeff();
  double bound = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const std::complex<double> lam = es.eigenvalues()(i);
    const double mag2 = std::norm(lam);
    if (std::sqrt(mag2) <= null_tol * top) continue;
    if (lam.real() <= 0.0) return 0.0;
    bound = std::min(bound, 2.0 * lam.real() / mag2);
  }
  return bound;
}

/// min(cap, half the stability bound).
inline double default_learning_rate(const Matrix& A, double cap = 3e-4) {
  const double bound = stability_bound(A);
  if (!(bound > 0.0)) throw DomainError("default_learning_rate: A has an eigenvalue with non-positive real part");
  return std::min(cap, 0.5 * bound);
}

struct FixedPointSolution {
  Vector w;
  double condition = 1.0;
  double residual = 0.0;  // ||Aw - b|| / ||b||
  bool ridge_used = false;
};

inline FixedPointSolution solve_fixed_point(const TdSystem& sys, double ridge_fallback = 1e-8) {
  if (!sys.A.allFinite() || !sys.b.allFinite()) throw NumericError("solve_fixed_point: system is not finite");
  FixedPointSolution out;
  Eigen::JacobiSVD<Matrix> svd(sys.A);
  const Vector sv = svd.singularValues();
  out.condition = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1) : std::numeric_limits<double>::infinity();
  if (out.condition <= 1e12) {
    out.w = sys.A.partialPivLu().solve(sys.b);
  } else {
    if (!(ridge_fallback > 0.0)) throw RankDeficiencyError("solve_fixed_point: A is singular and no ridge was allowed");
    const Matrix reg = sys.A + ridge_fallback * Matrix::Identity(sys.A.rows(), sys.A.cols());
    Eigen::JacobiSVD<Matrix> svd_reg(reg);
    const Vector sr = svd_reg.singularValues();
    if (!(sr(sr.size() - 1) > 0.0) || sr(0) / sr(sr.size() - 1) > 1e15) {
      throw RankDeficiencyError("solve_fixed_point: singular even after ridge " + std::to_string(ridge_fallback));
    }
    out.w = reg.partialPivLu().solve(sys.b);
    out.ridge_used = true;
  }
  const double bn = sys.b.norm();
  out.residual = (sys.A * out.w - sys.b).norm() / (bn > 0.0 ? bn : 1.0);
  return out;
}

struct SweepRecord {
  int iteration = 0;
  double objective = 0.0;  // sum of delta^2 / 2
  double weight_norm = 0.0;
  double max_abs_delta = 0.0;
};

struct SweepResult {
  Vector w_G;
  std::vector<SweepRecord> trace;
  int iterations = 0;
  bool converged = false;
};

struct SweepConfig {
  double gamma = 0.99;
  double alpha = 3e-4;
  int max_iterations = 1000;
  /// Stop once ||w_{n+1} - w_n|| <= tol * max(1, ||w_n||); 0 runs all iterations.
  double tolerance = 0.0;
  /// Keep every k-th record (the last iteration is always kept).
  int trace_every = 1;
};

/// Semi-gradient sweeps w <- w + alpha sum_j delta_j psi_j.
inline SweepResult td0_sweep(const TdFeatures& f, const Vector& w0, const Vector& rewards, double z,
                             const SweepConfig& cfg) {
  if (!(cfg.alpha > 0.0)) throw ConfigurationError("td0_sweep: alpha must be > 0");
  if (w0.size() != f.dim()) throw DimensionError("td0_sweep: weight length mismatch");
  const TdSystem sys = assemble_system(f, rewards, cfg.gamma, z);
  SweepResult out;
  out.w_G = w0;
  auto record = [&](int it) {
    const Vector delta = anticipatory_td_errors(f, out.w_G, rewards, cfg.gamma, z);
    out.trace.push_back({it, 0.5 * delta.squaredNorm(), out.w_G.norm(), delta.cwiseAbs().maxCoeff()});
  };
  record(0);
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    const Vector step = cfg.alpha * (sys.b - sys.A * out.w_G);
    out.w_G += step;
    out.iterations = it;
    if (!out.w_G.allFinite() || out.w_G.norm() > 1e12) {
      throw NumericError("td0_sweep: weights diverged at iteration " + std::to_string(it) +
                         "; lower the learning rate (alpha=" + std::to_string(cfg.alpha) + ")");
    }
    const bool done = cfg.tolerance > 0.0 && step.norm() <= cfg.tolerance * std::max(1.0, out.w_G.norm());
    if (done || it == cfg.max_iterations || it % std::max(1, cfg.trace_every) == 0) record(it);
    if (done) {
      out.converged = true;
      break;
    }
  }
  return out;
}

struct RewardFit {
  Vector w;
  double mse = 0.0;
};

/// Ridge regression of realised rewards on compressed signatures (rows of `features`).
inline RewardFit fit_reward_weights(const Matrix& features, const Vector& rewards, double ridge) {
  if (features.rows() == 0) throw InsufficientDataError("fit_reward_weights: no samples");
  if (!(ridge > 0.0)) throw ConfigurationError("fit_reward_weights: ridge must be > 0");
  if (rewards.size() != features.rows()) throw DimensionError("fit_reward_weights: one reward per sample");
  const Eigen::Index m = features.cols();
  RewardFit fit;
  const Matrix gram = features.transpose() * features + ridge * Matrix::Identity(m, m);
  fit.w = gram.ldlt().solve(features.transpose() * rewards);
  fit.mse = (features * fit.w - rewards).squaredNorm() / static_cast<double>(features.rows());
  return fit;
}

inline RewardFit fit_reward_weights(const std::vector<TruncTensor>& signatures, const Vector& rewards,
                                    const NystromMap& map, double ridge) {
  Matrix feats(static_cast<Eigen::Index>(signatures.size()), map.dim());
  for (std::size_t i = 0; i < signatures.size(); ++i) feats.row(static_cast<Eigen::Index>(i)) = map.compress(signatures[i]);
  return fit_reward_weights(feats, rewards, ridge);
}

/// One sampled episode: per-step features and rewards plus its terminal payoff.
struct Episode {
  TdFeatures features;
  Vector rewards;
  double z = 0.0;
};

struct ClassicalResult {
  Vector w;
  Matrix deltas;  // episodes x steps, from the final pass
};

/// Online semi-gradient TD(0) over sampled transitions, `passes` sweeps over
/// the episodes in order.
inline ClassicalResult classical_td0_baseline(const std::vector<Episode>& episodes, const Vector& w0, double gamma,
                                              double alpha, int passes) {
  if (episodes.empty()) throw InsufficientDataError("classical_td0_baseline: need at least one episode");
  if (!(alpha > 0.0) || passes < 1) throw ConfigurationError("classical_td0_baseline: need alpha > 0 and passes >= 1");
  const auto J = static_cast<Eigen::Index>(episodes.front().features.steps());
  ClassicalResult out{w0, Matrix::Zero(static_cast<Eigen::Index>(episodes.size()), J)};
  for (int pass = 0; pass < passes; ++pass) {
    for (std::size_t e = 0; e < episodes.size(); ++e) {
      const Episode& ep = episodes[e];
      if (static_cast<Eigen::Index>(ep.features.steps()) != J) throw DimensionError("classical_td0_baseline: ragged episodes");
      for (Eigen::Index j = 0; j < J; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        const double delta = anticipatory_td_error(ep.features, out.w, ep.rewards, ju, gamma, ep.z);
        out.w += alpha * delta * ep.features.psi.col(j);
        if (pass + 1 == passes) out.deltas(static_cast<Eigen::Index>(e), j) = delta;
      }
      if (!out.w.allFinite() || out.w.norm() > 1e12) {
        throw NumericError("classical_td0_baseline: weights diverged in pass " + std::to_string(pass));
      }
    }
  }
  return out;
}

struct VarianceReport {
  double var_anticipatory = 0.0;
  double var_classical = 0.0;
  double ratio = 0.0;
  std::size_t n_anticipatory = 0;
  std::size_t n_classical = 0;
  bool reduced = false;
};

inline double sample_variance(const std::vector<double>& xs) {
  if (xs.size() < 2) throw InsufficientDataError("sample_variance: need at least 2 samples");
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(xs.size() - 1);
}

inline VarianceReport variance_compare(const std::vector<double>& anticipatory, const std::vector<double>& classical,
                                       std::size_t min_samples = 30) {
  if (anticipatory.size() < min_samples || classical.size() < min_samples) {
    throw InsufficientDataError("variance_compare: need at least " + std::to_string(min_samples) +
                                " samples on each side (got " + std::to_string(anticipatory.size()) + " and " +
                                std::to_string(classical.size()) + ")");
  }
  VarianceReport r;
  r.n_anticipatory = anticipatory.size();
  r.n_classical = classical.size();
  r.var_anticipatory = sample_variance(anticipatory);
  r.var_classical = sample_variance(classical);
  r.ratio = r.var_classical > 0.0 ? r.var_anticipatory / r.var_classical
                                  : (r.var_anticipatory > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
  r.reduced = r.var_anticipatory <= r.var_classical;
  return r;
}

}  // namespace arl

#endif  // ARL_ARL_LEARNER_HPP
