#ifndef ARL_EXPERIMENTS_HPP
#define ARL_EXPERIMENTS_HPP

// End-to-end experiment pipelines shared by the command-line driver and the
// acceptance suite.  Every random choice is keyed on (seed, purpose) so each
// pipeline is a pure function of its configuration.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "arl/analysis.hpp"
#include "arl/anjd_env.hpp"
#include "arl/arl_learner.hpp"
#include "arl/greeks_risk.hpp"
#include "arl/kernelspace.hpp"
#include "arl/proxy_flow.hpp"
#include "arl/rng.hpp"
#include "arl/signature.hpp"
#include "arl/tensor_algebra.hpp"

namespace arl {

/// Seed derivation: independent seeds for each purpose and index.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t purpose, std::uint64_t index = 0) {
  StreamRng rng(base, 0xD5'0000'0000ull ^ (purpose << 20) ^ index);
  const std::uint64_t hi = rng.next_u32();
  return (hi << 32) | rng.next_u32();
}

enum SeedPurpose : std::uint64_t {
  kSeedBurnIn = 1,
  kSeedPilot = 2,
  kSeedLandmarks = 3,
  kSeedScf = 4,
  kSeedRate = 5,
  kSeedTd = 6,
  kSeedEpisodes = 7,
  kSeedVariance = 8,
  kSeedGreeks = 9,
  kSeedRisk = 10,
  kSeedContraction = 11,
  kSeedStress = 12,
  kSeedDecay = 13,
};

struct EnvConfig {
  AnjdParams params = AnjdParams::quiet(1);
  Vector x0 = Vector::Zero(1);
  double horizon = 1.0;
  std::size_t steps = 250;
  bool reward_channel = true;
  double action = 0.0;
  /// Steps of simulated history before the junction (0: empty history).
  std::size_t burn_in_steps = 0;
};

struct KernelConfig {
  int degree = 4;
  InterpolationMode mode = InterpolationMode::rectilinear;
  std::size_t landmarks = 128;
  std::size_t pilot_paths = 256;
  std::size_t checkpoints = 8;
  /// <= 0: 1e-6 * mean diagonal of the landmark Gram matrix.
  double ridge = 0.0;
  bool factorial_weights = false;
  /// Metric shift as a fraction of the mean feature variance.
  double metric_lambda_rel = 1e-2;
};

struct ScfConfig {
  std::size_t train_paths = 4096;
  int rounds = 2;
  int depth = 2;
  int proxy_inputs = 4;
  int junction_inputs = 4;
  TrainerConfig trainer;
  std::vector<std::size_t> rate_sizes{64, 256, 1024, 4096};
  int rate_repeats = 4;
};

struct TdConfig {
  double gamma = 0.99;
  double alpha = 0.0;  // <= 0: default_learning_rate
  int max_iterations = 200000;
  double tolerance = 1e-13;
  double ridge_fallback = 1e-8;
  std::size_t baseline_episodes = 64;
  int baseline_passes = 20;
  std::size_t variance_seeds = 100;
  std::size_t variance_paths = 512;
  double reward_ridge = 1e-6;
  /// Random-walk realisable scenario.
  std::size_t realizable_landmarks = 8;
  std::size_t realizable_steps = 50;
  double realizable_step_scale = 0.3;
};

struct RiskSettings {
  double alpha_tail = 0.05;
  double beta_risk = 1.0;
  double action_step = 1e-3;
  std::size_t paths = 4096;
};

struct AnalysisConfig {
  std::size_t contraction_trials = 1000;
  double fixed_point_tol = 1e-10;
  std::vector<double> stress_scales{1.0, 3.0, 10.0};
  std::size_t stress_paths = 1024;
  double bound_b = 1.0;
  std::size_t lyapunov_seeds = 64;
};

struct GreeksSettings {
  std::size_t points = 3;  // evenly spaced grid indices, first and last included
  std::size_t directions = 10;
  double theta_step = 1e-5;
};

struct ExperimentConfig {
  EnvConfig env;
  KernelConfig kernel;
  ScfConfig scf;
  TdConfig td;
  RiskSettings risk;
  AnalysisConfig analysis;
  GreeksSettings greeks;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// Objects every pipeline shares: grid, junction, landmarks and compression.
struct World {
  ExperimentConfig cfg;
  SignatureOptions opts;
  std::vector<double> grid;
  Junction junction;
  Vector junction_proxy;
  NystromMap map;

  int path_dim() const { return cfg.env.params.dim() + (cfg.env.reward_channel ? 1 : 0); }
  int channels() const { return path_dim() + 1; }
  int reward_channel_index() const { return cfg.env.reward_channel ? channels() - 1 : -1; }
};

inline EnsembleSpec base_spec(const World& w, std::size_t n, std::uint64_t seed) {
  EnsembleSpec s;
  s.params = w.cfg.env.params;
  s.junction = w.junction;
  s.grid = w.grid;
  s.n_paths = n;
  s.seed = seed;
  s.policy = constant_policy(w.cfg.env.action);
  s.reward_channel = w.cfg.env.reward_channel;
  s.signature = w.opts;
  s.nystrom = &w.map;
  s.threads = w.cfg.threads;
  return s;
}

/// Memory-free copy of the parameters (used before a compression exists).
inline AnjdParams without_memory(AnjdParams p) {
  p.drift_memory_gain = Matrix::Zero(p.dim(), 0);
  return p;
}

inline LevelWeights kernel_weights(const KernelConfig& k) {
  return k.factorial_weights ? factorial_level_weights(k.degree) : unit_level_weights(k.degree);
}

inline World build_world(const ExperimentConfig& cfg) {
  World w;
  w.cfg = cfg;
  const EnvConfig& env = cfg.env;
  env.params.validate();
  if (env.x0.size() != env.params.drift_base.size()) throw DimensionError("build_world: x0 dimension mismatch");
  w.opts.degree = cfg.kernel.degree;
  w.opts.mode = cfg.kernel.mode;
  w.opts.time_scale = 1.0 / env.horizon;
  w.grid = uniform_grid(0.0, env.horizon, env.steps);
  const int c = w.channels();

  // Junction history from a memory-free burn-in run ending at t = 0.
  w.junction.t = 0.0;
  w.junction.x = env.x0;
  w.junction.history = identity(c, cfg.kernel.degree);
  if (env.burn_in_steps > 0) {
    EnsembleSpec burn;
    burn.params = without_memory(env.params);
    burn.junction = {-env.horizon, env.x0, identity(c, cfg.kernel.degree)};
    burn.grid = uniform_grid(-env.horizon, env.horizon, env.burn_in_steps);
    burn.n_paths = 1;
    burn.seed = derive_seed(cfg.seed, kSeedBurnIn);
    burn.reward_channel = env.reward_channel;
    burn.signature = w.opts;
    const CadlagPath hist = simulate_path(burn, 0).first;
    w.junction.history = path_signature(hist, w.opts);
    w.junction.x = Vector::Map(hist.x(hist.size() - 1).data(), env.params.dim());
  }

  // Landmarks: running signatures of a memory-free pilot ensemble at evenly
  // spaced checkpoints, reservoir-sampled.
  EnsembleSpec pilot;
  pilot.params = without_memory(env.params);
  pilot.junction = w.junction;
  pilot.grid = w.grid;
  pilot.n_paths = cfg.kernel.pilot_paths;
  pilot.seed = derive_seed(cfg.seed, kSeedPilot);
  pilot.reward_channel = env.reward_channel;
  pilot.signature = w.opts;
  pilot.threads = cfg.threads;
  const Ensemble pilot_ens = generate_ensemble(pilot);
  const std::size_t checkpoints = std::max<std::size_t>(1, std::min(cfg.kernel.checkpoints, env.steps));
  std::vector<TruncTensor> pool;
  pool.reserve(pilot_ens.size() * checkpoints);
  for (const auto& path : pilot_ens.paths) {
    for (std::size_t q = 1; q <= checkpoints; ++q) {
      const std::size_t j = q * env.steps / checkpoints;
      pool.push_back(trunc_product(w.junction.history, path_signature(path, w.grid.front(), w.grid[j], w.opts)));
    }
  }
  const auto picked = reservoir_sample(pool.size(), std::min(cfg.kernel.landmarks, pool.size()),
                                       derive_seed(cfg.seed, kSeedLandmarks));
  std::vector<TruncTensor> landmarks;
  landmarks.reserve(picked.size());
  for (auto i : picked) landmarks.push_back(pool[i]);
  const LevelWeights weights = kernel_weights(cfg.kernel);
  const double ridge = cfg.kernel.ridge > 0.0 ? cfg.kernel.ridge : default_ridge(landmarks, weights);
  w.map = build_nystrom(std::move(landmarks), ridge, weights);
  w.junction_proxy = w.map.compress(w.junction.history);
  return w;
}

/// Metric with shift lambda = rel * mean variance of the compressed features.
inline AvnsgMetric fit_relative_metric(const std::vector<TruncTensor>& samples, const NystromMap& map, double rel) {
  Matrix feats(static_cast<Eigen::Index>(samples.size()), map.dim());
  for (std::size_t i = 0; i < samples.size(); ++i) feats.row(static_cast<Eigen::Index>(i)) = map.compress(samples[i]);
  const Matrix centered = feats.rowwise() - feats.colwise().mean();
  const double mean_var = centered.squaredNorm() / static_cast<double>(std::max<Eigen::Index>(1, feats.rows() - 1)) /
                          static_cast<double>(map.dim());
  return fit_avnsg(feats, std::max(rel * mean_var, 1e-12));
}

/// Agent-mode ensemble following a trajectory (memory input from the flow).
inline Ensemble agent_ensemble(const World& w, const ProxyTrajectory& traj, std::size_t n, std::uint64_t seed) {
  EnsembleSpec s = base_spec(w, n, seed);
  if (w.cfg.env.params.memory_dim() > 0) s.proxy_schedule = proxy_schedule(traj, w.junction.history, w.map);
  return generate_ensemble(s);
}

inline ProxyTrajectory identity_trajectory(const World& w) {
  const Generator zero(w.channels(), w.cfg.kernel.degree, 1);
  return integrate_flow(zero, w.junction_proxy, w.grid);
}

struct RatePoint {
  std::size_t n = 0;
  double distance = 0.0;  // RMS over repeats of d_Q(S_bar_n, phi_T)
};

struct ScfOutcome {
  Generator generator;
  ProxyTrajectory trajectory;
  AvnsgMetric metric;
  FlowTargets targets;
  std::vector<TrainingResult> rounds;
  std::vector<RatePoint> rate;
  double rate_slope = 0.0;
  double scf_before = 0.0;  // SCF loss of the untrained (zero) generator
  double scf_after = 0.0;
  double tangent_gap = 0.0;   // whitened distance of the first generator step to the empirical one
  double tangent_noise = 0.0; // its Monte-Carlo scale
};

/// Alternating SCF rounds: simulate under the current flow, distil targets,
/// retrain.  Then measures the equilibrium rate at the trained flow.
inline ScfOutcome run_scf(const World& w, bool measure_rate = true) {
  const ScfConfig& sc = w.cfg.scf;
  ScfOutcome out;
  Generator gen(w.channels(), w.cfg.kernel.degree, sc.depth, sc.proxy_inputs, sc.junction_inputs);
  ProxyTrajectory traj = identity_trajectory(w);
  SignatureStatistics stats;
  for (int round = 0; round < std::max(1, sc.rounds); ++round) {
    const Ensemble ens = agent_ensemble(w, traj, sc.train_paths, derive_seed(w.cfg.seed, kSeedScf, static_cast<std::uint64_t>(round)));
    stats = signature_statistics(ens, w.opts, true, w.cfg.threads);
    out.metric = fit_relative_metric(stats.terminal, w.map, w.cfg.kernel.metric_lambda_rel);
    out.targets = make_flow_targets({&stats}, w.grid, w.junction_proxy);
    TrainerConfig tc = sc.trainer;
    tc.threads = w.cfg.threads;
    TrainingResult tr = train_generator(gen, out.targets, w.map, out.metric, tc);
    gen = tr.generator;
    traj = integrate_flow(gen, w.junction_proxy, w.grid, &w.map);
    out.rounds.push_back(std::move(tr));
  }
  out.generator = gen;
  out.trajectory = traj;
  out.scf_before = scf_loss(identity_trajectory(w), out.targets.terminal_mean, w.map, out.metric, sc.trainer.eta);
  out.scf_after = scf_loss(traj, out.targets.terminal_mean, w.map, out.metric, sc.trainer.eta);

  // First-step tangent against the empirical one, in whitened units, with the
  // Monte-Carlo scale of the empirical increment mean.
  {
    const TruncTensor ell = gen(0.0, detail::proxy_input(gen, &w.map, traj.elements[0]), w.junction_proxy);
    const double ds = w.grid[1] - w.grid[0];
    const Vector model = w.map.compress(trunc_exp(ell * ds));
    const Vector empirical = w.map.compress(stats.step_mean[0]);
    out.tangent_gap = q_distance(out.metric, model, empirical) / ds;
    const Ensemble probe = agent_ensemble(w, traj, 256, derive_seed(w.cfg.seed, kSeedScf, 999));
    Matrix steps(static_cast<Eigen::Index>(probe.size()), w.map.dim());
    std::vector<double> scratch;
    for (std::size_t i = 0; i < probe.size(); ++i) {
      TruncTensor step = identity(w.channels(), w.opts.degree);
      const auto& p = probe.paths[i];
      detail::apply_step(step, p.t(0), p.t(1), p.t(0), p.t(1), p.x(0), p.x(1), p.jump(1), w.opts, scratch);
      steps.row(static_cast<Eigen::Index>(i)) = w.map.compress(step);
    }
    const Matrix centered = steps.rowwise() - steps.colwise().mean();
    const Matrix cov = centered.transpose() * centered / static_cast<double>(steps.rows() - 1);
    out.tangent_noise =
        std::sqrt(std::max(0.0, (out.metric.precision * cov).trace() / static_cast<double>(sc.train_paths))) / ds;
  }

  if (measure_rate) {
    const Vector target = w.map.compress(traj.terminal());
    std::vector<double> xs, ys;
    for (std::size_t r = 0; r < sc.rate_sizes.size(); ++r) {
      const std::size_t n = sc.rate_sizes[r];
      double acc = 0.0;
      for (int rep = 0; rep < sc.rate_repeats; ++rep) {
        const Ensemble ens =
            agent_ensemble(w, traj, n, derive_seed(w.cfg.seed, kSeedRate, r * 1000 + static_cast<std::uint64_t>(rep)));
        const TruncTensor mean = empirical_mean_signature(ens, w.grid.front(), w.grid.back(), w.opts, w.cfg.threads);
        const double d = q_distance(out.metric, w.map.compress(mean), target);
        acc += d * d;
      }
      const double rms = std::sqrt(acc / sc.rate_repeats);
      out.rate.push_back({n, rms});
      xs.push_back(std::log(static_cast<double>(n)));
      ys.push_back(std::log(rms));
    }
    out.rate_slope = fit_slope(xs, ys);
  }
  return out;
}

struct TdOutcome {
  TdFeatures features;
  ValueWeights weights;
  Vector rewards;
  double z = 0.0;
  TdSystem system;
  FixedPointSolution oracle;
  double alpha = 0.0;
  double stability = 0.0;
  SweepResult sweep;
  double sweep_rel_error = 0.0;   // ||w_sweep - w*|| / ||w*||
  double max_abs_delta_oracle = 0.0;
  double max_abs_delta_sweep = 0.0;
  double min_sym_eigenvalue = 0.0;
  Vector w_true;
};

/// Realisable construction on a trajectory: rewards generated from a random
/// w_true, then oracle solve and TD(0) sweeps from zero.
inline TdOutcome run_td_realizable(const ProxyTrajectory& traj, const NystromMap& map, const TdConfig& tc,
                                   std::uint64_t seed) {
  TdOutcome out;
  out.features = td_features(traj, map);
  const Eigen::Index m = map.dim();
  StreamRng rng(seed, 0);
  out.w_true = Vector(m);
  for (Eigen::Index i = 0; i < m; ++i) out.w_true(i) = rng.normal() / std::sqrt(static_cast<double>(m));
  out.weights = ValueWeights::zeros(m);
  for (Eigen::Index i = 0; i < m; ++i) out.weights.w_z(i) = rng.normal() / std::sqrt(static_cast<double>(m));
  out.z = terminal_payoff(out.features, out.weights);
  out.rewards = realizable_rewards(out.features, out.w_true, tc.gamma, out.z);
  out.system = assemble_system(out.features, out.rewards, tc.gamma, out.z);
  out.oracle = solve_fixed_point(out.system, tc.ridge_fallback);
  const Matrix sym = 0.5 * (out.system.A + out.system.A.transpose());
  out.min_sym_eigenvalue = Eigen::SelfAdjointEigenSolver<Matrix>(sym, Eigen::EigenvaluesOnly).eigenvalues()(0);
  out.stability = stability_bound(out.system.A);
  out.alpha = tc.alpha > 0.0 ? tc.alpha : default_learning_rate(out.system.A);
  SweepConfig sc;
  sc.gamma = tc.gamma;
  sc.alpha = out.alpha;
  sc.max_iterations = tc.max_iterations;
  sc.tolerance = tc.tolerance;
  sc.trace_every = std::max(1, tc.max_iterations / 1000);
  out.sweep = td0_sweep(out.features, Vector::Zero(m), out.rewards, out.z, sc);
  out.sweep_rel_error = (out.sweep.w_G - out.oracle.w).norm() / std::max(out.oracle.w.norm(), 1e-300);
  out.max_abs_delta_oracle =
      anticipatory_td_errors(out.features, out.oracle.w, out.rewards, tc.gamma, out.z).cwiseAbs().maxCoeff();
  out.max_abs_delta_sweep =
      anticipatory_td_errors(out.features, out.sweep.w_G, out.rewards, tc.gamma, out.z).cwiseAbs().maxCoeff();
  return out;
}

struct TrainedTdOutcome {
  TdFeatures features;
  ValueWeights weights;  // w_G from the oracle, w_R from the reward regression, z = 0
  double reward_mse = 0.0;
  Vector rewards;
  TdSystem system;
  FixedPointSolution oracle;
  double alpha = 0.0;
  SweepResult sweep;
  double sweep_rel_error = 0.0;
  double max_abs_delta_oracle = 0.0;
  ClassicalResult classical;
  double classical_rel_gap = 0.0;  // ||w_classical - w*|| / ||w*||
};

/// TD on the trained flow: rewards regressed from realised step rewards on
/// compressed step signatures, anticipatory oracle and sweep, and a sampled
/// classical TD(0) baseline on the same features.
inline TrainedTdOutcome run_td_trained(const World& w, const ProxyTrajectory& traj) {
  const TdConfig& tc = w.cfg.td;
  TrainedTdOutcome out;
  const Ensemble ens = agent_ensemble(w, traj, tc.baseline_episodes, derive_seed(w.cfg.seed, kSeedEpisodes));
  std::vector<Episode> episodes;
  const Eigen::Index m = w.map.dim();
  const auto J = static_cast<Eigen::Index>(ens.steps());
  Matrix seg(static_cast<Eigen::Index>(ens.size()) * J, m);
  Vector realised(seg.rows());
  for (std::size_t i = 0; i < ens.size(); ++i) {
    Episode ep;
    ep.features = path_td_features(ens.paths[i], w.opts, w.map);
    ep.rewards = ens.rewards.row(static_cast<Eigen::Index>(i)).transpose();
    const Eigen::Index r0 = static_cast<Eigen::Index>(i) * J;
    seg.middleRows(r0, J) = ep.features.segment.transpose();
    realised.segment(r0, J) = ep.rewards;
    episodes.push_back(std::move(ep));
  }
  const RewardFit fit = fit_reward_weights(seg, realised, tc.reward_ridge);
  out.reward_mse = fit.mse;

  out.features = td_features(traj, w.map);
  out.weights = ValueWeights::zeros(m);
  out.weights.w_R = fit.w;
  out.weights.z_constant = 0.0;
  out.rewards = step_rewards(out.features, fit.w);
  out.system = assemble_system(out.features, out.rewards, tc.gamma, 0.0);
  out.oracle = solve_fixed_point(out.system, tc.ridge_fallback);
  out.weights.w_G = out.oracle.w;
  out.alpha = tc.alpha > 0.0 ? tc.alpha : default_learning_rate(out.system.A);
  SweepConfig sc;
  sc.gamma = tc.gamma;
  sc.alpha = out.alpha;
  sc.max_iterations = tc.max_iterations;
  sc.tolerance = tc.tolerance;
  sc.trace_every = std::max(1, tc.max_iterations / 1000);
  out.sweep = td0_sweep(out.features, Vector::Zero(m), out.rewards, 0.0, sc);
  const double wn = std::max(out.oracle.w.norm(), 1e-300);
  out.sweep_rel_error = (out.sweep.w_G - out.oracle.w).norm() / wn;
  out.max_abs_delta_oracle =
      anticipatory_td_errors(out.features, out.oracle.w, out.rewards, tc.gamma, 0.0).cwiseAbs().maxCoeff();
  out.classical = classical_td0_baseline(episodes, Vector::Zero(m), tc.gamma, out.alpha, tc.baseline_passes);
  out.classical_rel_gap = (out.classical.w - out.oracle.w).norm() / wn;
  return out;
}

/// `count` evenly spaced indices into a grid of `steps` intervals, ends included.
inline std::vector<std::size_t> spread_indices(std::size_t steps, std::size_t count) {
  std::vector<std::size_t> out;
  if (count == 0) return out;
  if (count == 1) return {0};
  for (std::size_t q = 0; q < count; ++q) {
    const std::size_t j = q * steps / (count - 1);
    if (out.empty() || out.back() != j) out.push_back(j);
  }
  return out;
}

struct VarianceOutcome {
  VarianceReport first_step;      // delta at the junction step, across seeds
  double mean_var_anticipatory = 0.0;  // per-step variance across seeds, averaged over steps
  double mean_var_classical = 0.0;
  double mean_ratio = 0.0;
  std::vector<double> anticipatory;
  std::vector<double> classical;
};

/// Anticipatory TD-errors from per-seed ensemble-mean trajectories against
/// single-path sampled TD-errors, both with the same (w_G, w_R, z).
inline VarianceOutcome run_variance(const World& w, const ValueWeights& weights, std::size_t seeds,
                                    std::size_t paths, double gamma) {
  VarianceOutcome out;
  std::vector<Vector> all_a, all_c;
  for (std::size_t k = 0; k < seeds; ++k) {
    const std::uint64_t seed = derive_seed(w.cfg.seed, kSeedVariance, k);
    EnsembleSpec spec = base_spec(w, paths, seed);
    const Ensemble ens = generate_ensemble(spec);
    SignatureStatistics st = signature_statistics(ens, w.opts, false, w.cfg.threads);
    const ProxyTrajectory traj = trajectory_from_elements(w.grid, st.running_mean);
    const TdFeatures fa = td_features(traj, w.map);
    const Vector ra = step_rewards(fa, weights.w_R);
    all_a.push_back(anticipatory_td_errors(fa, weights.w_G, ra, gamma, terminal_payoff(fa, weights)));

    const TdFeatures fc = path_td_features(ens.paths.front(), w.opts, w.map);
    const Vector rc = step_rewards(fc, weights.w_R);
    all_c.push_back(anticipatory_td_errors(fc, weights.w_G, rc, gamma, terminal_payoff(fc, weights)));

    out.anticipatory.push_back(all_a.back()(0));
    out.classical.push_back(all_c.back()(0));
  }
  out.first_step = variance_compare(out.anticipatory, out.classical);
  const Eigen::Index J = all_a.front().size();
  for (Eigen::Index j = 0; j < J; ++j) {
    std::vector<double> a, c;
    for (std::size_t k = 0; k < seeds; ++k) {
      a.push_back(all_a[k](j));
      c.push_back(all_c[k](j));
    }
    out.mean_var_anticipatory += sample_variance(a) / static_cast<double>(J);
    out.mean_var_classical += sample_variance(c) / static_cast<double>(J);
  }
  out.mean_ratio = out.mean_var_classical > 0.0 ? out.mean_var_anticipatory / out.mean_var_classical : 0.0;
  return out;
}

/// Random-walk trajectory on the group with random landmarks: a well-posed
/// TD system (independent residual features) for exact fixed-point checks.
struct RandomWalkCase {
  NystromMap map;
  ProxyTrajectory trajectory;
};

inline TruncTensor random_lie(int channels, int degree, double scale, StreamRng& rng) {
  TruncTensor x = TruncTensor::zero(channels, degree);
  for (std::size_t i = 1; i < x.size(); ++i) x[i] = scale * rng.normal();
  return x;
}

inline RandomWalkCase random_walk_case(int channels, int degree, std::size_t landmarks, std::size_t steps,
                                       double step_scale, std::uint64_t seed) {
  StreamRng rng(seed, 0x7A1Cull);
  std::vector<TruncTensor> lm;
  for (std::size_t i = 0; i < landmarks; ++i) lm.push_back(trunc_exp(random_lie(channels, degree, 0.5, rng)));
  const LevelWeights weights = unit_level_weights(degree);
  const double ridge = default_ridge(lm, weights);
  RandomWalkCase out{build_nystrom(std::move(lm), ridge, weights), {}};
  std::vector<TruncTensor> el{identity(channels, degree)};
  for (std::size_t j = 0; j < steps; ++j) el.push_back(trunc_product(el.back(), trunc_exp(random_lie(channels, degree, step_scale, rng))));
  out.trajectory = trajectory_from_elements(uniform_grid(0.0, 1.0, steps), std::move(el));
  return out;
}

/// Mean terminal signature of a CRN ensemble under a constant action.
inline TruncTensor terminal_mean_for_action(const World& w, double action, std::size_t n, std::uint64_t seed) {
  EnsembleSpec s = base_spec(w, n, seed);
  s.policy = constant_policy(action);
  const Ensemble ens = generate_ensemble(s);
  return empirical_mean_signature(ens, w.grid.front(), w.grid.back(), w.opts, w.cfg.threads);
}

/// Central difference of the terminal mean signature in the action.
inline TruncTensor action_sensitivity(const World& w, double action, double h, std::size_t n, std::uint64_t seed) {
  const TruncTensor up = terminal_mean_for_action(w, action + h, n, seed);
  const TruncTensor down = terminal_mean_for_action(w, action - h, n, seed);
  return (up - down) * (1.0 / (2.0 * h));
}

struct GreeksRow {
  std::size_t index = 0;
  double s = 0.0;
  double value = 0.0;
  double grad_w_norm = 0.0;
  double grad_w_fd_err = 0.0;
  double grad_proxy_norm = 0.0;
  double grad_proxy_fd_err = 0.0;
  double grad_theta_norm = 0.0;
  double grad_theta_fd_err = 0.0;
};

struct GreeksOutcome {
  std::vector<GreeksRow> rows;
  double max_w_err = 0.0;
  double max_proxy_err = 0.0;
  double max_theta_err = 0.0;
};

/// Analytic sensitivities against central finite differences at a few grid points.
inline GreeksOutcome run_greeks(const World& w, const Generator& gen, const Vector& w_G,
                                const std::vector<std::size_t>& indices, std::size_t directions = 10,
                                double theta_step = 1e-5) {
  GreeksOutcome out;
  const ProxyTrajectory traj = integrate_flow(gen, w.junction_proxy, w.grid, &w.map);
  const Eigen::Index m = w.map.dim();
  for (std::size_t j : indices) {
    GreeksRow row;
    row.index = j;
    row.s = w.grid.at(j);
    const Vector psi = grad_w(traj, w.map, j);
    row.value = w_G.dot(psi);

    // w: V is linear in w, so a unit central difference is exact up to rounding.
    Vector fd_w(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      Vector wp = w_G, wm = w_G;
      wp(i) += 1.0;
      wm(i) -= 1.0;
      fd_w(i) = 0.5 * (wp.dot(psi) - wm.dot(psi));
    }
    row.grad_w_norm = psi.norm();
    row.grad_w_fd_err = max_relative_error(psi, fd_w);

    // proxy directions: h -> <w, compress(phi_j^{-1} (phi_j + e h)... )> linear in h.
    const TruncTensor cov = grad_proxy(traj, w.map, w_G, j);
    const TruncTensor inv = group_inverse(traj.elements[j]);
    Vector an(static_cast<Eigen::Index>(directions)), fd(static_cast<Eigen::Index>(directions));
    StreamRng rng(derive_seed(w.cfg.seed, kSeedGreeks, j), 0);
    for (std::size_t q = 0; q < directions; ++q) {
      TruncTensor h = TruncTensor::zero(w.channels(), w.opts.degree);
      for (std::size_t p = 1; p < h.size(); ++p) h[p] = rng.normal();
      const double eps = 1e-3;
      const double up = w_G.dot(w.map.compress(trunc_product(inv, h * eps)));
      const double dn = w_G.dot(w.map.compress(trunc_product(inv, h * -eps)));
      fd(static_cast<Eigen::Index>(q)) = (up - dn) / (2.0 * eps);
      an(static_cast<Eigen::Index>(q)) = as_vector(cov).dot(as_vector(h));
    }
    row.grad_proxy_norm = as_vector(cov).norm();
    row.grad_proxy_fd_err = max_relative_error(an, fd);

    const Vector gt = grad_theta(gen, w.junction_proxy, w.grid, w.map, w_G, j, w.cfg.threads);
    const Vector theta0 = gen.theta();
    const Vector fdt = central_difference_gradient(
        [&](const Vector& th) {
          Generator g = gen;
          g.set_theta(th);
          return generator_value(g, w.junction_proxy, w.grid, w.map, w_G, j);
        },
        theta0, theta_step, w.cfg.threads);
    row.grad_theta_norm = gt.norm();
    row.grad_theta_fd_err = max_relative_error(gt, fdt);

    out.max_w_err = std::max(out.max_w_err, row.grad_w_fd_err);
    out.max_proxy_err = std::max(out.max_proxy_err, row.grad_proxy_fd_err);
    out.max_theta_err = std::max(out.max_theta_err, row.grad_theta_fd_err);
    out.rows.push_back(row);
  }
  return out;
}

struct RiskOutcome {
  ReturnMoments proxy_moments;     // from the trained flow's terminal element
  ReturnMoments ensemble_moments;  // from the ensemble-mean signature
  double sample_mean = 0.0;
  double sample_variance = 0.0;
  double variance_stderr = 0.0;
  double cvar_gaussian = 0.0;
  double cvar_empirical = 0.0;
  double advantage = 0.0;
  double rectified_advantage = 0.0;
  double risk_inner = 0.0;
};

inline double variance_standard_error(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  double m2 = 0.0, m4 = 0.0;
  for (double x : xs) {
    const double d2 = (x - mean) * (x - mean);
    m2 += d2;
    m4 += d2 * d2;
  }
  m2 /= n;
  m4 /= n;
  return std::sqrt(std::max(0.0, m4 - m2 * m2) / n);
}

inline RiskOutcome run_risk(const World& w, const ProxyTrajectory& traj, double delta_a) {
  if (!w.cfg.env.reward_channel) throw ConfigurationError("run_risk: reward channel is switched off");
  RiskOutcome out;
  const int rc = w.reward_channel_index();
  const RiskSettings& rs = w.cfg.risk;
  const std::uint64_t seed = derive_seed(w.cfg.seed, kSeedRisk);
  const Ensemble ens = generate_ensemble(base_spec(w, rs.paths, seed));
  const TruncTensor mean = empirical_mean_signature(ens, w.grid.front(), w.grid.back(), w.opts, w.cfg.threads);
  out.proxy_moments = return_moments(traj.terminal(), rc);
  out.ensemble_moments = return_moments(mean, rc);
  const Vector returns = path_returns(ens);
  std::vector<double> rets(returns.data(), returns.data() + returns.size());
  out.sample_mean = returns.mean();
  out.sample_variance = sample_variance(rets);
  out.variance_stderr = variance_standard_error(rets);
  out.cvar_gaussian = cvar(out.proxy_moments.mean, std::max(0.0, out.proxy_moments.variance), rs.alpha_tail);
  out.cvar_empirical = empirical_cvar(rets, rs.alpha_tail);
  RiskConfig cfg{rs.alpha_tail, rs.beta_risk, rc};
  const TruncTensor sens = action_sensitivity(w, w.cfg.env.action, rs.action_step, rs.paths, seed);
  out.advantage = delta_a;
  out.rectified_advantage = risk_rectified_advantage(delta_a, traj.terminal(), &sens, cfg);
  out.risk_inner = as_vector(risk_gradient(traj.terminal(), cfg)).dot(as_vector(sens));
  return out;
}

struct AnalysisOutcome {
  ContractionReport contraction;
  FixedPointRun fixed_a;
  FixedPointRun fixed_b;
  double fixed_gap = 0.0;  // distance between the two limits
  DecayCurve decay;
  double lyapunov = 0.0;
  std::vector<StressRow> stress;        // metric refitted per regime
  std::vector<StressRow> stress_fixed;  // metric of the first regime throughout
};

inline AnalysisOutcome run_analysis(const World& w, const ProxyTrajectory& traj, const AvnsgMetric& metric,
                                    double gamma) {
  AnalysisOutcome out;
  const AnalysisConfig& ac = w.cfg.analysis;
  const Eigen::Index m = w.map.dim();
  const std::uint64_t cseed = derive_seed(w.cfg.seed, kSeedContraction);

  BellmanOperator op;
  op.gamma = gamma;
  op.transition = random_q_nonexpansive(metric, 1.0, cseed);
  op.offset = w.map.compress(traj.terminal()) * (1.0 - gamma);
  op.reward = w.cfg.env.reward_channel ? return_moments(traj.terminal(), w.reward_channel_index()).mean : 0.0;
  out.contraction = contraction_check(op, metric, ac.contraction_trials, cseed);

  auto apply = [&op](const LawEncoding& e) { return op(e); };
  LawEncoding start_a{0.0, Vector::Zero(m)};
  LawEncoding start_b{10.0, Vector::Ones(m)};
  out.fixed_a = fixed_point_iterate(apply, start_a, metric, ac.fixed_point_tol);
  out.fixed_b = fixed_point_iterate(apply, start_b, metric, ac.fixed_point_tol);
  out.fixed_gap = law_distance(metric, out.fixed_a.limit, out.fixed_b.limit);

  // Forecast error against the environment run under the same memory input.
  const Ensemble env = agent_ensemble(w, traj, w.cfg.scf.train_paths, derive_seed(w.cfg.seed, kSeedDecay));
  const SignatureStatistics st = signature_statistics(env, w.opts, false, w.cfg.threads);
  out.decay = forecast_decay(traj, st.running_mean, w.map, metric);
  out.lyapunov = lyapunov_estimate(base_spec(w, 1, derive_seed(w.cfg.seed, kSeedDecay, 1)), ac.lyapunov_seeds);

  // Per-path terminal signatures under scaled jump sizes.  The primary table
  // refits the metric to each regime; the second keeps the x1 metric.
  std::vector<std::vector<TruncTensor>> proxies;
  std::vector<AvnsgMetric> metrics;
  const std::uint64_t sseed = derive_seed(w.cfg.seed, kSeedStress);
  for (std::size_t q = 0; q < ac.stress_scales.size(); ++q) {
    World ws = w;
    ws.cfg.env.params.jump_mean *= ac.stress_scales[q];
    ws.cfg.env.params.jump_scale *= ac.stress_scales[q];
    const Ensemble e = generate_ensemble(base_spec(ws, ac.stress_paths, sseed));
    SignatureStatistics s = signature_statistics(e, w.opts, true, w.cfg.threads);
    metrics.push_back(fit_relative_metric(s.terminal, w.map, w.cfg.kernel.metric_lambda_rel));
    proxies.push_back(std::move(s.terminal));
  }
  out.stress = whitened_norm_stress(ac.stress_scales, proxies, w.map, metrics, ac.bound_b);
  out.stress_fixed = whitened_norm_stress(ac.stress_scales, proxies, w.map, {metrics.front()}, ac.bound_b);
  return out;
}

}  // namespace arl

#endif  // ARL_EXPERIMENTS_HPP
