#ifndef ARL_ANJD_ENV_HPP
#define ARL_ANJD_ENV_HPP

// Jump-diffusion environment with drift coupled to the compressed signature
// of the history, and ensemble generation on counter-based streams.
//
//   dX = (mu + G h_s + a e) ds + L dW + dJ
//
// h_s is the compressed proxy (history signature, or a supplied schedule),
// L is lower-triangular and state independent, J is compound Poisson with
// Gaussian marks.  Jumps are applied as zero-time (Marcus) displacements and
// flagged on the path point they land on.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "arl/errors.hpp"
#include "arl/kernelspace.hpp"
#include "arl/parallel.hpp"
#include "arl/rng.hpp"
#include "arl/signature.hpp"
#include "arl/tensor_algebra.hpp"

namespace arl {

struct AnjdParams {
  Vector drift_base;        // d, per unit time
  Matrix drift_memory_gain;  // d x m (m = 0: no memory coupling)
  Matrix vol;               // d x d lower-triangular, per sqrt(unit time)
  double jump_intensity = 0.0;
  Vector jump_mean;        // d
  Vector jump_scale;       // d, >= 0
  Vector action_exposure;  // d
  Vector reward_loadings;  // d, position held when the action is 0

  int dim() const { return static_cast<int>(drift_base.size()); }
  Eigen::Index memory_dim() const { return drift_memory_gain.cols(); }

  /// Zero-noise, zero-jump, zero-memory parameters of dimension d.
  static AnjdParams quiet(int d) {
    AnjdParams p;
    p.drift_base = Vector::Zero(d);
    p.drift_memory_gain = Matrix::Zero(d, 0);
    p.vol = Matrix::Zero(d, d);
    p.jump_mean = Vector::Zero(d);
    p.jump_scale = Vector::Zero(d);
    p.action_exposure = Vector::Zero(d);
    p.reward_loadings = Vector::Ones(d);
    return p;
  }

  void validate() const {
    const auto d = drift_base.size();
    if (d < 1) throw ConfigurationError("AnjdParams: drift_base must be non-empty");
    auto need = [&](Eigen::Index got, const char* name) {
      if (got != d) throw DimensionError(std::string("AnjdParams: ") + name + " has wrong dimension");
    };
    need(drift_memory_gain.rows(), "drift_memory_gain rows");
    need(vol.rows(), "vol rows");
    need(vol.cols(), "vol cols");
    need(jump_mean.size(), "jump_mean");
    need(jump_scale.size(), "jump_scale");
    need(action_exposure.size(), "action_exposure");
    need(reward_loadings.size(), "reward_loadings");
    for (Eigen::Index i = 0; i < d; ++i) {
      if (vol(i, i) < 0.0) throw ConfigurationError("AnjdParams: vol diagonal must be >= 0");
      for (Eigen::Index j = i + 1; j < d; ++j) {
        if (vol(i, j) != 0.0) throw ConfigurationError("AnjdParams: vol must be lower-triangular");
      }
      if (jump_scale(i) < 0.0) throw ConfigurationError("AnjdParams: jump_scale must be >= 0");
    }
    if (!(jump_intensity >= 0.0)) throw ConfigurationError("AnjdParams: jump_intensity must be >= 0");
    const bool finite = drift_base.allFinite() && drift_memory_gain.allFinite() && vol.allFinite() &&
                        std::isfinite(jump_intensity) && jump_mean.allFinite() && jump_scale.allFinite() &&
                        action_exposure.allFinite() && reward_loadings.allFinite();
    if (!finite) throw ConfigurationError("AnjdParams: all parameters must be finite");
  }
};

struct StepResult {
  Vector x;
  double reward = 0.0;
  bool jump = false;
  unsigned jump_count = 0;
};

/// One Euler-Maruyama step with a Poisson-thinned Marcus jump.  Draw order on
/// `rng`: d diffusion normals, the jump count, then d normals per jump.
inline StepResult env_step(const AnjdParams& params, const Vector& x, const Vector& history_proxy, double action,
                           double dt, StreamRng& rng) {
  if (!(dt > 0.0)) throw DomainError("env_step: dt must be > 0");
  if (!(action >= -1.0 && action <= 1.0)) throw DomainError("env_step: action must lie in [-1, 1]");
  const auto d = params.drift_base.size();
  if (x.size() != d) throw DimensionError("env_step: state dimension mismatch");
  if (history_proxy.size() != params.memory_dim()) {
    throw DimensionError("env_step: history proxy has " + std::to_string(history_proxy.size()) +
                         " coordinates, drift_memory_gain expects " + std::to_string(params.memory_dim()));
  }
  Vector drift = params.drift_base + action * params.action_exposure;
  if (params.memory_dim() > 0) drift += params.drift_memory_gain * history_proxy;

  Vector xi(d);
  for (Eigen::Index i = 0; i < d; ++i) xi(i) = rng.normal();
  const double sqrt_dt = std::sqrt(dt);

  StepResult out;
  out.x = x + drift * dt + params.vol.template triangularView<Eigen::Lower>() * xi * sqrt_dt;
  out.jump_count = rng.poisson(params.jump_intensity * dt);
  for (unsigned j = 0; j < out.jump_count; ++j) {
    for (Eigen::Index i = 0; i < d; ++i) out.x(i) += params.jump_mean(i) + params.jump_scale(i) * rng.normal();
  }
  out.jump = out.jump_count > 0;
  out.reward = (params.reward_loadings + action * params.action_exposure).dot(out.x - x);
  if (!out.x.allFinite() || !std::isfinite(out.reward)) {
    throw NumericError("env_step: non-finite state after step (dt=" + std::to_string(dt) +
                       ", jumps=" + std::to_string(out.jump_count) + ")");
  }
  return out;
}

/// Maps (t, state, compressed proxy) to an action in [-1, 1].
using Policy = std::function<double(double, const Vector&, const Vector&)>;

inline Policy constant_policy(double a) {
  return [a](double, const Vector&, const Vector&) { return a; };
}

/// Junction state (t, X_t, Phi_{t|A_t}).  The history signature lives on the
/// path channels: clock, X, and the cumulative reward when that channel is on.
struct Junction {
  double t = 0.0;
  Vector x;
  TruncTensor history;
};

struct EnsembleSpec {
  AnjdParams params;
  Junction junction;
  std::vector<double> grid;
  std::size_t n_paths = 1;
  std::uint64_t seed = 0;
  Policy policy = constant_policy(0.0);
  /// Append the cumulative reward as an extra path coordinate.
  bool reward_channel = true;
  SignatureOptions signature;
  /// Required when the drift has memory coupling.
  const NystromMap* nystrom = nullptr;
  /// Agent mode: compressed proxy per grid index driving the memory term for
  /// every path.  Empty: each path uses its own running history signature.
  std::vector<Vector> proxy_schedule;
  unsigned threads = 1;
};

struct Ensemble {
  std::vector<CadlagPath> paths;
  Matrix rewards;  // N x J, reward of step j -> j+1
  std::vector<double> grid;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> stream_ids;
  bool reward_channel = true;
  int state_dim = 0;

  std::size_t size() const { return paths.size(); }
  std::size_t steps() const { return grid.size() - 1; }
  int path_dim() const { return state_dim + (reward_channel ? 1 : 0); }
};

namespace detail {

inline void validate_grid(const std::vector<double>& grid, double t0) {
  if (grid.size() < 2) throw ConfigurationError("ensemble grid needs at least two points");
  if (grid.front() != t0) throw ConfigurationError("ensemble grid must start at the junction time");
  for (std::size_t j = 1; j < grid.size(); ++j) {
    if (!(grid[j] > grid[j - 1])) throw OrderingError("ensemble grid must be strictly increasing");
  }
}

}  // namespace detail

/// Uniform grid t0, t0 + h, ..., t0 + horizon with `steps` steps.
inline std::vector<double> uniform_grid(double t0, double horizon, std::size_t steps) {
  if (steps < 1 || !(horizon > 0.0)) throw ConfigurationError("uniform_grid: need steps >= 1 and horizon > 0");
  std::vector<double> g(steps + 1);
  for (std::size_t j = 0; j <= steps; ++j) g[j] = t0 + horizon * static_cast<double>(j) / static_cast<double>(steps);
  return g;
}

/// Simulates one path on stream `stream`.  Returns the path and its step rewards.
inline std::pair<CadlagPath, std::vector<double>> simulate_path(const EnsembleSpec& spec, std::uint64_t stream) {
  const AnjdParams& p = spec.params;
  const int d = p.dim();
  const int path_dim = d + (spec.reward_channel ? 1 : 0);
  const std::size_t steps = spec.grid.size() - 1;
  const bool memory = p.memory_dim() > 0;
  const bool own_history = memory && spec.proxy_schedule.empty();

  CadlagPath path(path_dim);
  path.reserve(steps + 1);
  std::vector<double> rewards(steps);
  std::vector<double> coords(static_cast<std::size_t>(path_dim));
  Vector x = spec.junction.x;
  double cumulative = 0.0;
  auto fill_coords = [&] {
    for (int i = 0; i < d; ++i) coords[static_cast<std::size_t>(i)] = x(i);
    if (spec.reward_channel) coords[static_cast<std::size_t>(d)] = cumulative;
  };
  fill_coords();
  path.push_back(spec.grid[0], coords, false);

  TruncTensor running = spec.junction.history;
  std::vector<double> prev = coords;
  std::vector<double> scratch;
  Vector h = Vector::Zero(p.memory_dim());
  // Only the leading coordinates up to the last non-zero gain column matter.
  Eigen::Index used = 0;
  for (Eigen::Index k = 0; k < p.memory_dim(); ++k) {
    if (!p.drift_memory_gain.col(k).isZero(0.0)) used = k + 1;
  }

  for (std::size_t j = 0; j < steps; ++j) {
    const double t = spec.grid[j];
    const double dt = spec.grid[j + 1] - t;
    if (memory) {
      if (own_history) {
        h.head(used) = spec.nystrom->compress_head(running, used);
      } else {
        h = spec.proxy_schedule[j];
      }
    }
    const double action = spec.policy(t, x, h);
    StreamRng rng(spec.seed, stream, static_cast<std::uint32_t>(j));
    StepResult step = env_step(p, x, h, action, dt, rng);
    x = std::move(step.x);
    cumulative += step.reward;
    rewards[j] = step.reward;
    fill_coords();
    path.push_back(spec.grid[j + 1], coords, step.jump);
    if (own_history) {
      detail::apply_step(running, t, spec.grid[j + 1], t, spec.grid[j + 1], prev, coords, step.jump, spec.signature,
                         scratch);
      prev = coords;
    }
  }
  return {std::move(path), std::move(rewards)};
}

inline void validate_spec(const EnsembleSpec& spec) {
  spec.params.validate();
  if (spec.n_paths < 1) throw ConfigurationError("generate_ensemble: N must be >= 1");
  if (spec.junction.x.size() != spec.params.drift_base.size()) {
    throw DimensionError("generate_ensemble: junction state dimension mismatch");
  }
  detail::validate_grid(spec.grid, spec.junction.t);
  const int path_dim = spec.params.dim() + (spec.reward_channel ? 1 : 0);
  if (spec.params.memory_dim() > 0) {
    if (spec.proxy_schedule.empty()) {
      if (spec.nystrom == nullptr) throw ConfigurationError("generate_ensemble: memory coupling needs a Nystrom map");
      if (spec.nystrom->dim() != spec.params.memory_dim()) {
        throw DimensionError("generate_ensemble: Nystrom dimension does not match drift_memory_gain");
      }
      if (spec.junction.history.channels() != path_dim + 1 || spec.junction.history.degree() != spec.signature.degree) {
        throw DimensionError("generate_ensemble: junction history signature has the wrong shape");
      }
    } else if (spec.proxy_schedule.size() < spec.grid.size() - 1) {
      throw DimensionError("generate_ensemble: proxy schedule shorter than the grid");
    }
  }
}

/// N independent paths, path i on counter stream i.  Deterministic in
/// (seed, N, grid) whatever the thread count.
inline Ensemble generate_ensemble(const EnsembleSpec& spec) {
  validate_spec(spec);
  Ensemble ens;
  ens.grid = spec.grid;
  ens.seed = spec.seed;
  ens.reward_channel = spec.reward_channel;
  ens.state_dim = spec.params.dim();
  ens.paths.resize(spec.n_paths);
  ens.stream_ids.resize(spec.n_paths);
  ens.rewards.resize(static_cast<Eigen::Index>(spec.n_paths), static_cast<Eigen::Index>(spec.grid.size() - 1));
  parallel_for(spec.n_paths, spec.threads, [&](std::size_t i) {
    auto [path, rewards] = simulate_path(spec, i);
    ens.paths[i] = std::move(path);
    ens.stream_ids[i] = i;
    for (std::size_t j = 0; j < rewards.size(); ++j) {
      ens.rewards(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rewards[j];
    }
  });
  return ens;
}

/// Mean of per-path signatures over [t0, t1].
inline TruncTensor empirical_mean_signature(const Ensemble& ens, double t0, double t1, const SignatureOptions& opts,
                                            unsigned threads = 1) {
  if (ens.paths.empty()) throw InsufficientDataError("empirical_mean_signature: empty ensemble");
  if (t0 < ens.grid.front() || t1 > ens.grid.back() || t0 > t1) {
    throw RangeError("empirical_mean_signature: interval outside the ensemble grid");
  }
  const int c = ens.path_dim() + 1;
  ChunkPlan plan(ens.size(), 64);
  std::vector<TruncTensor> partial(plan.chunks, TruncTensor::zero(c, opts.degree));
  parallel_for(plan.chunks, threads, [&](std::size_t ch) {
    for (std::size_t i = plan.begin(ch); i < plan.end(ch); ++i) partial[ch] += path_signature(ens.paths[i], t0, t1, opts);
  });
  TruncTensor total = TruncTensor::zero(c, opts.degree);
  for (const auto& p : partial) total += p;
  total *= 1.0 / static_cast<double>(ens.size());
  total[0] = 1.0;
  return total;
}

/// Per-grid-point ensemble statistics gathered in one pass.
struct SignatureStatistics {
  std::vector<TruncTensor> running_mean;  // mean S_{t, s_j}, j = 0..J
  std::vector<TruncTensor> step_mean;     // mean S_{s_j, s_{j+1}}, j = 0..J-1
  std::vector<TruncTensor> terminal;      // per-path S_{t, T} (when requested)
  std::size_t n = 0;
};

inline SignatureStatistics signature_statistics(const Ensemble& ens, const SignatureOptions& opts,
                                                bool keep_terminal = true, unsigned threads = 1) {
  if (ens.paths.empty()) throw InsufficientDataError("signature_statistics: empty ensemble");
  const int c = ens.path_dim() + 1;
  const std::size_t steps = ens.steps();
  const TruncTensor zero = TruncTensor::zero(c, opts.degree);
  ChunkPlan plan(ens.size(), 64);
  std::vector<std::vector<TruncTensor>> part_running(plan.chunks, std::vector<TruncTensor>(steps + 1, zero));
  std::vector<std::vector<TruncTensor>> part_step(plan.chunks, std::vector<TruncTensor>(steps, zero));
  SignatureStatistics stats;
  stats.n = ens.size();
  if (keep_terminal) stats.terminal.resize(ens.size());

  parallel_for(plan.chunks, threads, [&](std::size_t ch) {
    std::vector<double> scratch;
    for (std::size_t i = plan.begin(ch); i < plan.end(ch); ++i) {
      const CadlagPath& path = ens.paths[i];
      TruncTensor running = identity(c, opts.degree);
      part_running[ch][0] += running;
      for (std::size_t j = 0; j < steps; ++j) {
        TruncTensor step = identity(c, opts.degree);
        detail::apply_step(step, path.t(j), path.t(j + 1), path.t(j), path.t(j + 1), path.x(j), path.x(j + 1),
                           path.jump(j + 1), opts, scratch);
        running = trunc_product(running, step);
        part_step[ch][j] += step;
        part_running[ch][j + 1] += running;
      }
      if (keep_terminal) stats.terminal[i] = running;
    }
  });

  const double inv_n = 1.0 / static_cast<double>(ens.size());
  stats.running_mean.assign(steps + 1, zero);
  stats.step_mean.assign(steps, zero);
  for (std::size_t ch = 0; ch < plan.chunks; ++ch) {
    for (std::size_t j = 0; j <= steps; ++j) stats.running_mean[j] += part_running[ch][j];
    for (std::size_t j = 0; j < steps; ++j) stats.step_mean[j] += part_step[ch][j];
  }
  for (auto& t : stats.running_mean) {
    t *= inv_n;
    t[0] = 1.0;
  }
  for (auto& t : stats.step_mean) {
    t *= inv_n;
    t[0] = 1.0;
  }
  return stats;
}

/// S_{s_j, T} for every grid index j of one path (backward Chen products).
inline std::vector<TruncTensor> suffix_signatures(const CadlagPath& path, const SignatureOptions& opts) {
  const std::size_t n = path.size();
  const int c = path.dim() + 1;
  std::vector<TruncTensor> out(n, identity(c, opts.degree));
  std::vector<double> scratch;
  for (std::size_t j = n - 1; j-- > 0;) {
    TruncTensor step = identity(c, opts.degree);
    detail::apply_step(step, path.t(j), path.t(j + 1), path.t(j), path.t(j + 1), path.x(j), path.x(j + 1),
                       path.jump(j + 1), opts, scratch);
    out[j] = trunc_product(step, out[j + 1]);
  }
  return out;
}

/// Total reward of each path.
inline Vector path_returns(const Ensemble& ens) { return ens.rewards.rowwise().sum(); }

}  // namespace arl

#endif  // ARL_ANJD_ENV_HPP
