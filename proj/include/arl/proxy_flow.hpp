#ifndef ARL_PROXY_FLOW_HPP
#define ARL_PROXY_FLOW_HPP

// Deterministic flow of the forecast proxy on the signature group, driven by
// a learned generator, plus score-matching / self-consistency training.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "arl/anjd_env.hpp"
#include "arl/errors.hpp"
#include "arl/kernelspace.hpp"
#include "arl/parallel.hpp"
#include "arl/tensor_algebra.hpp"

namespace arl {

/// Affine generator: features [1, u, h_cur[0..p_cur), h_junc[0..p_junc)]
/// map to the coefficients of levels 1..depth; the scalar part stays 0.
/// u = (s - t) / (T - t) is the phase, h_cur the compressed current proxy and
/// h_junc the compressed junction proxy.
class Generator {
 public:
  Generator() = default;
  Generator(int channels, int degree, int depth, int proxy_inputs = 0, int junction_inputs = 0)
      : channels_(channels), degree_(degree), depth_(depth), proxy_inputs_(proxy_inputs),
        junction_inputs_(junction_inputs), active_(static_cast<std::size_t>(depth) + 1, true) {
    if (channels < 1 || degree < 1) throw ConfigurationError("Generator: channels and degree must be >= 1");
    if (depth < 1 || depth > degree) throw ConfigurationError("Generator: depth must lie in [1, degree]");
    if (proxy_inputs < 0 || junction_inputs < 0) throw ConfigurationError("Generator: input counts must be >= 0");
    active_[0] = false;
    weights_ = Matrix::Zero(static_cast<Eigen::Index>(tensor_size(channels, depth) - 1), feature_count());
  }

  int channels() const { return channels_; }
  int degree() const { return degree_; }
  int depth() const { return depth_; }
  int proxy_inputs() const { return proxy_inputs_; }
  int junction_inputs() const { return junction_inputs_; }
  Eigen::Index feature_count() const { return 2 + proxy_inputs_ + junction_inputs_; }
  Eigen::Index output_count() const { return weights_.rows(); }
  bool reads_proxy() const { return proxy_inputs_ > 0; }

  const Matrix& weights() const { return weights_; }
  Matrix& weights() { return weights_; }

  /// Levels switched off here are never written to the output.
  void set_level_active(int level, bool on) {
    if (level < 1 || level > depth_) throw RangeError("Generator: level out of range");
    active_[static_cast<std::size_t>(level)] = on;
  }
  bool level_active(int level) const { return active_.at(static_cast<std::size_t>(level)); }

  /// Output row of coefficient `flat_index` (flat position in the tensor, >= 1).
  Eigen::Index row_of(std::size_t flat_index) const { return static_cast<Eigen::Index>(flat_index) - 1; }

  /// Flattened weights (column-major) and back.
  Vector theta() const { return Eigen::Map<const Vector>(weights_.data(), weights_.size()); }
  void set_theta(const Vector& theta) {
    if (theta.size() != weights_.size()) throw DimensionError("Generator::set_theta: length mismatch");
    Eigen::Map<Vector>(weights_.data(), weights_.size()) = theta;
  }
  Eigen::Index parameter_count() const { return weights_.size(); }

  Vector features(double phase, const Vector& proxy, const Vector& junction) const {
    Vector f(feature_count());
    f(0) = 1.0;
    f(1) = phase;
    if (proxy_inputs_ > 0) {
      if (proxy.size() < proxy_inputs_) throw DimensionError("Generator: compressed proxy shorter than proxy_inputs");
      f.segment(2, proxy_inputs_) = proxy.head(proxy_inputs_);
    }
    if (junction_inputs_ > 0) {
      if (junction.size() < junction_inputs_) {
        throw DimensionError("Generator: junction proxy shorter than junction_inputs");
      }
      f.segment(2 + proxy_inputs_, junction_inputs_) = junction.head(junction_inputs_);
    }
    return f;
  }

  /// Lie-like output for a feature vector.
  TruncTensor apply(const Vector& f) const { return apply_with(weights_, f); }

  TruncTensor apply_with(const Matrix& w, const Vector& f) const {
    const Vector raw = w * f;
    TruncTensor out = TruncTensor::zero(channels_, degree_);
    for (int lvl = 1; lvl <= depth_; ++lvl) {
      if (!active_[static_cast<std::size_t>(lvl)]) continue;
      const std::size_t off = out.offset(lvl);
      const std::size_t len = level_size(channels_, lvl);
      for (std::size_t p = 0; p < len; ++p) out[off + p] = raw(row_of(off + p));
    }
    return out;
  }

  TruncTensor operator()(double phase, const Vector& proxy, const Vector& junction) const {
    return apply(features(phase, proxy, junction));
  }

 private:
  int channels_ = 0;
  int degree_ = 0;
  int depth_ = 0;
  int proxy_inputs_ = 0;
  int junction_inputs_ = 0;
  std::vector<bool> active_;
  Matrix weights_;
};

/// Flow states s_0 = t < ... < s_J = T; element 0 is the identity.
struct ProxyTrajectory {
  std::vector<double> grid;
  std::vector<TruncTensor> elements;

  double junction_time() const { return grid.front(); }
  double horizon_time() const { return grid.back(); }
  std::size_t steps() const { return grid.size() - 1; }
  const TruncTensor& terminal() const { return elements.back(); }

  /// Grid index of time s; throws RangeError when s is not a grid point.
  std::size_t index_of(double s) const {
    for (std::size_t j = 0; j < grid.size(); ++j) {
      if (grid[j] == s) return j;
    }
    throw RangeError("ProxyTrajectory: time " + std::to_string(s) + " is not on the grid");
  }
};

/// phi (x) exp(ds * ell).
inline TruncTensor flow_step(const TruncTensor& phi, const TruncTensor& ell, double ds) {
  detail::require_group(phi, "flow_step");
  detail::require_lie(ell, "flow_step");
  if (!(ds > 0.0)) throw DomainError("flow_step: step must be > 0");
  return trunc_product(phi, trunc_exp(ell * ds));
}

inline double phase_of(const std::vector<double>& grid, std::size_t j) {
  return (grid[j] - grid.front()) / (grid.back() - grid.front());
}

namespace detail {

inline void check_flow_grid(const std::vector<double>& grid) {
  if (grid.size() < 2) throw ConfigurationError("flow grid needs at least two points");
  for (std::size_t j = 1; j < grid.size(); ++j) {
    if (!(grid[j] > grid[j - 1])) throw OrderingError("flow grid must be strictly increasing");
  }
}

inline Vector proxy_input(const Generator& gen, const NystromMap* map, const TruncTensor& g) {
  if (!gen.reads_proxy()) return Vector();
  if (map == nullptr) throw ConfigurationError("generator reads the proxy but no Nystrom map was given");
  return map->compress_head(g, gen.proxy_inputs());
}

}  // namespace detail

/// Iterated log-ODE steps from the identity.
inline ProxyTrajectory integrate_flow(const Generator& gen, const Vector& junction_proxy,
                                      const std::vector<double>& grid, const NystromMap* map = nullptr) {
  detail::check_flow_grid(grid);
  ProxyTrajectory traj;
  traj.grid = grid;
  traj.elements.reserve(grid.size());
  traj.elements.push_back(identity(gen.channels(), gen.degree()));
  for (std::size_t j = 0; j + 1 < grid.size(); ++j) {
    const TruncTensor& cur = traj.elements.back();
    const Vector h = detail::proxy_input(gen, map, cur);
    const TruncTensor ell = gen(phase_of(grid, j), h, junction_proxy);
    if (!all_finite(ell)) {
      throw NumericError("integrate_flow: generator output diverged at grid point " + std::to_string(j) +
                         " (s=" + std::to_string(grid[j]) + ")");
    }
    TruncTensor next = flow_step(cur, ell, grid[j + 1] - grid[j]);
    if (!all_finite(next)) {
      throw NumericError("integrate_flow: flow diverged at grid point " + std::to_string(j + 1));
    }
    traj.elements.push_back(std::move(next));
  }
  return traj;
}

/// Trajectory whose elements are given directly (e.g. ensemble running means).
inline ProxyTrajectory trajectory_from_elements(std::vector<double> grid, std::vector<TruncTensor> elements) {
  detail::check_flow_grid(grid);
  if (elements.size() != grid.size()) throw DimensionError("trajectory_from_elements: one element per grid point");
  for (const auto& e : elements) detail::require_group(e, "trajectory_from_elements");
  return ProxyTrajectory{std::move(grid), std::move(elements)};
}

/// Psi_{s_j,T} = phi_j^{-1} (x) phi_T.
inline TruncTensor nested_residual(const ProxyTrajectory& traj, std::size_t j) {
  if (j >= traj.elements.size()) throw RangeError("nested_residual: grid index out of range");
  if (j + 1 == traj.elements.size()) return identity(traj.terminal().channels(), traj.terminal().degree());
  return trunc_product(group_inverse(traj.elements[j]), traj.terminal());
}

inline TruncTensor nested_residual_at(const ProxyTrajectory& traj, double s) {
  return nested_residual(traj, traj.index_of(s));
}

/// Targets distilled from one or more ensembles for generator training.
struct FlowTargets {
  std::vector<double> grid;
  std::vector<TruncTensor> tangents;      // log(mean one-step increment) / ds
  std::vector<TruncTensor> running_mean;  // mean S_{t,s_j}
  TruncTensor terminal_mean;              // mean S_{t,T}
  Vector junction_proxy;
  std::size_t samples = 0;
};

/// Pools statistics (weighted by sample count) and converts increments to tangents.
inline FlowTargets make_flow_targets(const std::vector<const SignatureStatistics*>& stats,
                                     const std::vector<double>& grid, Vector junction_proxy) {
  if (stats.empty()) throw InsufficientDataError("make_flow_targets: need at least one ensemble");
  detail::check_flow_grid(grid);
  std::size_t total = 0;
  for (const auto* s : stats) {
    if (s->n == 0) throw InsufficientDataError("make_flow_targets: empty ensemble");
    if (s->step_mean.size() + 1 != grid.size()) throw DimensionError("make_flow_targets: grid does not match ensemble");
    total += s->n;
  }
  FlowTargets out;
  out.grid = grid;
  out.samples = total;
  out.junction_proxy = std::move(junction_proxy);
  const TruncTensor& proto = stats.front()->running_mean.front();
  const TruncTensor zero = TruncTensor::zero(proto.channels(), proto.degree());
  std::vector<TruncTensor> steps(grid.size() - 1, zero);
  out.running_mean.assign(grid.size(), zero);
  for (const auto* s : stats) {
    const double w = static_cast<double>(s->n) / static_cast<double>(total);
    for (std::size_t j = 0; j < steps.size(); ++j) steps[j] += s->step_mean[j] * w;
    for (std::size_t j = 0; j < grid.size(); ++j) out.running_mean[j] += s->running_mean[j] * w;
  }
  for (auto& r : out.running_mean) r[0] = 1.0;
  out.tangents.reserve(steps.size());
  for (std::size_t j = 0; j < steps.size(); ++j) {
    steps[j][0] = 1.0;
    out.tangents.push_back(trunc_log(steps[j]) * (1.0 / (grid[j + 1] - grid[j])));
  }
  out.terminal_mean = out.running_mean.back();
  return out;
}

/// Quadratic form g -> <Cg, Q Cg> on raw coordinates (C = Nystrom projector).
inline Matrix raw_metric(const NystromMap& map, const AvnsgMetric& metric) {
  if (metric.dim() != map.dim()) throw DimensionError("raw_metric: metric and Nystrom dimensions differ");
  return map.projector().transpose() * metric.precision * map.projector();
}

inline double raw_q_norm_squared(const Matrix& g_metric, const TruncTensor& x) {
  const auto v = as_vector(x);
  return v.dot(g_metric * v);
}

/// Mean over grid points of ||ell_gen(s_j) - tangent_j||^2 in the whitened metric.
inline double score_matching_loss(const Generator& gen, const FlowTargets& targets, const Matrix& g_metric,
                                  const NystromMap* map = nullptr, const ProxyTrajectory* traj = nullptr) {
  if (targets.tangents.empty()) throw InsufficientDataError("score_matching_loss: no targets");
  std::optional<ProxyTrajectory> own;
  if (gen.reads_proxy() && traj == nullptr) {
    own = integrate_flow(gen, targets.junction_proxy, targets.grid, map);
    traj = &*own;
  }
  double total = 0.0;
  for (std::size_t j = 0; j < targets.tangents.size(); ++j) {
    const Vector h = gen.reads_proxy() ? detail::proxy_input(gen, map, traj->elements[j]) : Vector();
    const TruncTensor diff = gen(phase_of(targets.grid, j), h, targets.junction_proxy) - targets.tangents[j];
    total += raw_q_norm_squared(g_metric, diff);
  }
  return total / static_cast<double>(targets.tangents.size());
}

/// eta * d_Q(compress(S_bar), compress(phi_T))^2.
inline double scf_loss(const TruncTensor& terminal, const TruncTensor& empirical_mean, const NystromMap& map,
                       const AvnsgMetric& metric, double eta = 0.1) {
  terminal.require_same_shape(empirical_mean, "scf_loss");
  if (!(eta >= 0.0)) throw ConfigurationError("scf_loss: eta must be >= 0");
  const double d = q_distance(metric, map.compress(empirical_mean), map.compress(terminal));
  return eta * d * d;
}

inline double scf_loss(const ProxyTrajectory& traj, const TruncTensor& empirical_mean, const NystromMap& map,
                       const AvnsgMetric& metric, double eta = 0.1) {
  return scf_loss(traj.terminal(), empirical_mean, map, metric, eta);
}

struct TrainerConfig {
  int epochs = 50;
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
  double fd_step = 1e-6;
  double eta = 0.1;
  /// Least-squares initialisation of the weights from the targets.
  bool warm_start = true;
  double warm_start_ridge = 1e-10;
  double divergence_threshold = 1e12;
  unsigned threads = 1;
};

struct TrainingRecord {
  int epoch = 0;
  double score_loss = 0.0;
  double scf_loss = 0.0;
  double total_loss = 0.0;
  double grad_norm = 0.0;
  double step_norm = 0.0;
};

struct TrainingResult {
  Generator generator;
  std::vector<TrainingRecord> trace;
  double initial_loss = 0.0;
  /// Epoch whose weights are returned (lowest total loss seen).
  int best_epoch = 0;
  double final_score_loss = 0.0;
  double final_scf_loss = 0.0;
};

/// Joint objective evaluated for a weight vector.  The score term uses a
/// factor R with R^T R = C^T Q C, so each grid point costs one small
/// matrix-vector product over the generator's output rows.
struct GeneratorObjective {
  const Generator* proto;
  const FlowTargets* targets;
  const NystromMap* map;
  const AvnsgMetric* metric;
  double eta;
  Matrix root;                      // m x tensor size
  std::vector<Vector> root_targets;  // R tangent_j

  GeneratorObjective(const Generator* gen, const FlowTargets* t, const NystromMap* m, const AvnsgMetric* q, double eta_)
      : proto(gen), targets(t), map(m), metric(q), eta(eta_) {
    if (metric->dim() != map->dim()) throw DimensionError("GeneratorObjective: metric and Nystrom dimensions differ");
    const Eigen::LLT<Matrix> llt(metric->precision);
    if (llt.info() != Eigen::Success) throw NumericError("GeneratorObjective: metric is not positive definite");
    root = llt.matrixU() * map->projector();
    for (const auto& tan : targets->tangents) root_targets.push_back(root * as_vector(tan));
  }

  double score(const Generator& gen, const ProxyTrajectory* traj) const {
    const Eigen::Index rows = gen.output_count();
    const auto block = root.middleCols(1, rows);
    Vector mask = Vector::Ones(rows);
    const TruncTensor shape = TruncTensor::zero(gen.channels(), gen.degree());
    for (int lvl = 1; lvl <= gen.depth(); ++lvl) {
      if (!gen.level_active(lvl)) {
        mask.segment(gen.row_of(shape.offset(lvl)), static_cast<Eigen::Index>(level_size(gen.channels(), lvl))).setZero();
      }
    }
    double total = 0.0;
    for (std::size_t j = 0; j < targets->tangents.size(); ++j) {
      const Vector h = gen.reads_proxy() ? detail::proxy_input(gen, map, traj->elements[j]) : Vector();
      const Vector raw = (gen.weights() * gen.features(phase_of(targets->grid, j), h, targets->junction_proxy)).cwiseProduct(mask);
      total += (block * raw - root_targets[j]).squaredNorm();
    }
    return total / static_cast<double>(targets->tangents.size());
  }

  std::pair<double, double> parts(const Generator& gen) const {
    const ProxyTrajectory traj =
        integrate_flow(gen, targets->junction_proxy, targets->grid, gen.reads_proxy() ? map : nullptr);
    return {score(gen, &traj), scf_loss(traj, targets->terminal_mean, *map, *metric, eta)};
  }

  double value(const Vector& theta) const {
    Generator g = *proto;
    g.set_theta(theta);
    const auto [a, b] = parts(g);
    return a + b;
  }
};

/// Central finite-difference gradient; entries are evaluated independently
/// so the result does not depend on the thread count.
template <typename F>
Vector central_difference_gradient(const F& f, const Vector& x, double h, unsigned threads = 1) {
  Vector grad(x.size());
  parallel_for(static_cast<std::size_t>(x.size()), threads, [&](std::size_t i) {
    Vector xp = x;
    Vector xm = x;
    const auto ii = static_cast<Eigen::Index>(i);
    xp(ii) += h;
    xm(ii) -= h;
    grad(ii) = (f(xp) - f(xm)) / (2.0 * h);
  });
  return grad;
}

/// Ordinary least squares of the targets on the generator features, with the
/// proxy inputs teacher-forced from the ensemble running means.
inline Generator warm_start_generator(const Generator& gen, const FlowTargets& targets, const NystromMap* map,
                                      double ridge) {
  const auto nf = gen.feature_count();
  const auto J = static_cast<Eigen::Index>(targets.tangents.size());
  Matrix F(nf, J);
  Matrix Y(gen.output_count(), J);
  for (Eigen::Index j = 0; j < J; ++j) {
    const auto ju = static_cast<std::size_t>(j);
    const Vector h = detail::proxy_input(gen, map, targets.running_mean[ju]);
    F.col(j) = gen.features(phase_of(targets.grid, ju), h, targets.junction_proxy);
    const auto& tan = targets.tangents[ju];
    for (Eigen::Index r = 0; r < Y.rows(); ++r) Y(r, j) = tan[static_cast<std::size_t>(r) + 1];
  }
  const Matrix gram = F * F.transpose() + ridge * Matrix::Identity(nf, nf);
  Generator out = gen;
  out.weights() = gram.ldlt().solve(F * Y.transpose()).transpose();
  return out;
}

/// AdamW on score matching + SCF with finite-difference gradients.  Returns
/// the lowest-loss iterate.
inline TrainingResult train_generator(const Generator& init, const FlowTargets& targets, const NystromMap& map,
                                      const AvnsgMetric& metric, const TrainerConfig& cfg) {
  if (targets.tangents.empty()) throw InsufficientDataError("train_generator: need at least one ensemble");
  if (cfg.epochs < 0 || !(cfg.learning_rate > 0.0) || !(cfg.fd_step > 0.0)) {
    throw ConfigurationError("train_generator: invalid optimiser configuration");
  }
  TrainingResult result;
  Generator gen = cfg.warm_start ? warm_start_generator(init, targets, &map, cfg.warm_start_ridge) : init;
  const GeneratorObjective obj(&gen, &targets, &map, &metric, cfg.eta);

  Vector theta = gen.theta();
  Vector m1 = Vector::Zero(theta.size());
  Vector m2 = Vector::Zero(theta.size());
  {
    Generator g0 = init;
    result.initial_loss = obj.value(g0.theta());
  }
  auto record = [&](int epoch, double grad_norm, double step_norm) {
    Generator g = gen;
    g.set_theta(theta);
    const auto [score, scf] = obj.parts(g);
    const double total = score + scf;
    if (!std::isfinite(total) || total > cfg.divergence_threshold) {
      std::string trace;
      for (const auto& r : result.trace) trace += " " + std::to_string(r.total_loss);
      throw NumericError("train_generator: loss diverged at epoch " + std::to_string(epoch) + "; trace:" + trace);
    }
    result.trace.push_back({epoch, score, scf, total, grad_norm, step_norm});
  };
  record(0, 0.0, 0.0);
  int best_epoch = 0;
  Vector best_theta = theta;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const Vector grad =
        central_difference_gradient([&](const Vector& th) { return obj.value(th); }, theta, cfg.fd_step, cfg.threads);
    m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * grad;
    m2 = cfg.beta2 * m2 + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(cfg.beta1, epoch);
    const double c2 = 1.0 - std::pow(cfg.beta2, epoch);
    const Vector step = cfg.learning_rate * ((m1 / c1).array() / ((m2 / c2).array().sqrt() + cfg.epsilon)).matrix() +
                        cfg.learning_rate * cfg.weight_decay * theta;
    theta -= step;
    record(epoch, grad.norm(), step.norm());
    if (result.trace.back().total_loss < result.trace[static_cast<std::size_t>(best_epoch)].total_loss) {
      best_epoch = epoch;
      best_theta = theta;
    }
  }
  gen.set_theta(best_theta);
  result.generator = gen;
  result.best_epoch = best_epoch;
  result.final_score_loss = result.trace[static_cast<std::size_t>(best_epoch)].score_loss;
  result.final_scf_loss = result.trace[static_cast<std::size_t>(best_epoch)].scf_loss;
  return result;
}

/// Sample-based metric on compressed per-path terminal signatures.
inline AvnsgMetric fit_terminal_metric(const std::vector<TruncTensor>& terminal, const NystromMap& map, double lambda) {
  Matrix feats(static_cast<Eigen::Index>(terminal.size()), map.dim());
  for (std::size_t i = 0; i < terminal.size(); ++i) feats.row(static_cast<Eigen::Index>(i)) = map.compress(terminal[i]);
  return fit_avnsg(feats, lambda);
}

/// Compressed junction-plus-forecast proxy per grid point: the memory input an
/// agent-mode ensemble sees while following this trajectory.
inline std::vector<Vector> proxy_schedule(const ProxyTrajectory& traj, const TruncTensor& junction_history,
                                          const NystromMap& map) {
  std::vector<Vector> out;
  out.reserve(traj.elements.size());
  for (const auto& e : traj.elements) out.push_back(map.compress(trunc_product(junction_history, e)));
  return out;
}

}  // namespace arl

#endif  // ARL_PROXY_FLOW_HPP
