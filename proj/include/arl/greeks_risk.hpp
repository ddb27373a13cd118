#ifndef ARL_GREEKS_RISK_HPP
#define ARL_GREEKS_RISK_HPP

// Sensitivities of the signature-linear value, return moments read off the
// forecast proxy, Gaussian CVaR and the risk-adjusted advantage.
//
// Tail convention: outcomes are gains.  cvar() is the mean of the worst
// alpha-fraction of gains (a low number is bad) and the risk is rho = -cvar.

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "arl/arl_learner.hpp"
#include "arl/errors.hpp"
#include "arl/kernelspace.hpp"
#include "arl/parallel.hpp"
#include "arl/proxy_flow.hpp"
#include "arl/tensor_algebra.hpp"

namespace arl {

/// dV(s_j)/dw_G = compress(Psi_j).
inline Vector grad_w(const ProxyTrajectory& traj, const NystromMap& map, std::size_t j) {
  return map.compress(nested_residual(traj, j));
}

/// Riesz representative (flat pairing) of h -> <w_G, compress(phi_j^{-1} (x) h)>.
inline TruncTensor grad_proxy(const ProxyTrajectory& traj, const NystromMap& map, const Vector& w_G, std::size_t j) {
  if (j >= traj.elements.size()) throw RangeError("grad_proxy: grid index out of range");
  return left_multiplication_adjoint(group_inverse(traj.elements[j]), map.pullback(w_G));
}

/// V(s_j) for the trajectory a generator produces.
inline double generator_value(const Generator& gen, const Vector& junction_proxy, const std::vector<double>& grid,
                              const NystromMap& map, const Vector& w_G, std::size_t j) {
  const ProxyTrajectory traj = integrate_flow(gen, junction_proxy, grid, &map);
  return w_G.dot(map.compress(nested_residual(traj, j)));
}

/// dV(s_j)/dtheta by forward-mode propagation of the flow tangent through
/// every log-ODE step; one tangent per weight.
inline Vector grad_theta(const Generator& gen, const Vector& junction_proxy, const std::vector<double>& grid,
                         const NystromMap& map, const Vector& w_G, std::size_t j, unsigned threads = 1) {
  const ProxyTrajectory traj = integrate_flow(gen, junction_proxy, grid, &map);
  if (j >= traj.elements.size()) throw RangeError("grad_theta: grid index out of range");
  const std::size_t J = traj.steps();
  const int c = gen.channels();
  const int k = gen.degree();

  std::vector<Vector> feats(J);
  std::vector<TruncTensor> lie(J);    // ds * ell_j
  std::vector<TruncTensor> expo(J);   // exp(ds * ell_j)
  for (std::size_t i = 0; i < J; ++i) {
    const Vector h = detail::proxy_input(gen, &map, traj.elements[i]);
    feats[i] = gen.features(phase_of(grid, i), h, junction_proxy);
    lie[i] = gen.apply(feats[i]) * (grid[i + 1] - grid[i]);
    expo[i] = trunc_exp(lie[i]);
  }
  const Eigen::Index np = gen.parameter_count();
  if (j == J) return Vector::Zero(np);  // Psi_T is the identity for every theta
  const TruncTensor inv_j = group_inverse(traj.elements[j]);
  const Vector cw = map.projector().transpose() * w_G;  // flat covector of w_G o compress

  const Eigen::Index nrows = gen.output_count();
  Vector grad(np);
  parallel_for(static_cast<std::size_t>(np), threads, [&](std::size_t p) {
    const auto pi = static_cast<Eigen::Index>(p);
    const Eigen::Index row = pi % nrows;
    const Eigen::Index col = pi / nrows;
    Matrix dw = Matrix::Zero(nrows, gen.feature_count());
    dw(row, col) = 1.0;
    TruncTensor dphi = TruncTensor::zero(c, k);
    TruncTensor dphi_j = dphi;
    for (std::size_t i = 0; i < J; ++i) {
      if (i == j) dphi_j = dphi;
      Vector df = Vector::Zero(gen.feature_count());
      if (gen.reads_proxy()) {
        df.segment(2, gen.proxy_inputs()) = map.compress_head(dphi, gen.proxy_inputs());
      }
      const double ds = grid[i + 1] - grid[i];
      TruncTensor dell = gen.apply_with(dw, feats[i]) + gen.apply(df);
      const TruncTensor dexp = trunc_exp_derivative(lie[i], dell * ds);
      dphi = trunc_product(dphi, expo[i]) + trunc_product(traj.elements[i], dexp);
    }
    // d(inv_j T) = -inv_j dphi_j inv_j T + inv_j dT
    const TruncTensor dpsi = trunc_product(inv_j, dphi) -
                             trunc_product(trunc_product(trunc_product(inv_j, dphi_j), inv_j), traj.terminal());
    grad(pi) = cw.dot(as_vector(dpsi));
  });
  return grad;
}

/// Largest entrywise relative error, each entry measured against
/// max(|reference_i|, floor * ||reference||_inf).
inline double max_relative_error(const Vector& analytic, const Vector& reference, double floor = 1e-3) {
  if (analytic.size() != reference.size()) throw DimensionError("max_relative_error: length mismatch");
  const double scale = reference.cwiseAbs().maxCoeff();
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double denom = std::max(std::abs(reference(i)), floor * scale);
    const double err = std::abs(analytic(i) - reference(i));
    if (err == 0.0) continue;
    worst = std::max(worst, denom > 0.0 ? err / denom : std::numeric_limits<double>::infinity());
  }
  return worst;
}

struct ReturnMoments {
  double mean = 0.0;
  double second = 0.0;
  double variance = 0.0;
};

inline void check_reward_channel(const TruncTensor& g, int channel) {
  if (channel < 1 || channel >= g.channels()) {
    throw ConfigurationError("return_moments: reward channel " + std::to_string(channel) +
                             " missing (tensor has " + std::to_string(g.channels()) + " channels)");
  }
  if (g.degree() < 2) throw ConfigurationError("return_moments: need degree >= 2");
}

/// Mean from level 1, second moment from twice the level-2 diagonal entry of
/// the reward channel.
inline ReturnMoments return_moments(const TruncTensor& expected_signature, int reward_channel) {
  check_reward_channel(expected_signature, reward_channel);
  const auto r = static_cast<std::size_t>(reward_channel);
  const std::size_t c = static_cast<std::size_t>(expected_signature.channels());
  ReturnMoments m;
  m.mean = expected_signature.level(1)[r];
  m.second = 2.0 * expected_signature.level(2)[r * c + r];
  m.variance = m.second - m.mean * m.mean;
  return m;
}

inline double std_normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

inline double std_normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(0.0, 1.0), p);
}

inline void check_tail(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigurationError("tail probability must lie in (0, 1)");
}

/// Mean of the worst alpha-fraction of a Gaussian gain.
inline double cvar(double mean, double variance, double alpha) {
  check_tail(alpha);
  if (variance < 0.0) {
    throw NumericError("cvar: negative variance " + std::to_string(variance) + " (inconsistent moments)");
  }
  return mean - std::sqrt(variance) * std_normal_pdf(std_normal_quantile(alpha)) / alpha;
}

/// Mean of the lowest ceil(alpha n) samples.
inline double empirical_cvar(std::vector<double> samples, double alpha) {
  check_tail(alpha);
  if (samples.empty()) throw InsufficientDataError("empirical_cvar: no samples");
  const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(samples.size()))));
  std::partial_sort(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(k), samples.end());
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += samples[i];
  return s / static_cast<double>(k);
}

struct RiskConfig {
  double alpha_tail = 0.05;
  double beta_risk = 0.0;
  int reward_channel = 0;

  void validate() const {
    check_tail(alpha_tail);
    if (!(beta_risk >= 0.0)) throw ConfigurationError("RiskConfig: beta_risk must be >= 0");
  }
};

/// Gradient of rho = -cvar(mean, variance) with respect to the raw proxy.
/// At zero variance the square-root term has no derivative and is dropped.
inline TruncTensor risk_gradient(const TruncTensor& terminal, const RiskConfig& cfg) {
  cfg.validate();
  const ReturnMoments m = return_moments(terminal, cfg.reward_channel);
  if (m.variance < -1e-10) throw NumericError("risk_gradient: negative variance (inconsistent moments)");
  const auto r = static_cast<std::size_t>(cfg.reward_channel);
  const std::size_t c = static_cast<std::size_t>(terminal.channels());
  const double k = std_normal_pdf(std_normal_quantile(cfg.alpha_tail)) / cfg.alpha_tail;
  // cvar = mean - k sqrt(second - mean^2)
  double d_mean = 1.0;
  double d_second = 0.0;
  if (m.variance > 0.0) {
    const double sd = std::sqrt(m.variance);
    d_mean += k * m.mean / sd;
    d_second = -k / (2.0 * sd);
  }
  TruncTensor g = TruncTensor::zero(terminal.channels(), terminal.degree());
  g[terminal.offset(1) + r] = -d_mean;
  g[terminal.offset(2) + r * c + r] = -2.0 * d_second;
  return g;
}

/// delta_A - beta <d rho / d phi_T, d phi_T / d a>.
inline double risk_rectified_advantage(double delta_a, const TruncTensor& terminal,
                                       const TruncTensor* action_sensitivity, const RiskConfig& cfg) {
  if (action_sensitivity == nullptr) throw ConfigurationError("risk_rectified_advantage: action sensitivity missing");
  terminal.require_same_shape(*action_sensitivity, "risk_rectified_advantage");
  if (cfg.beta_risk == 0.0) return delta_a;
  const TruncTensor g = risk_gradient(terminal, cfg);
  return delta_a - cfg.beta_risk * as_vector(g).dot(as_vector(*action_sensitivity));
}

}  // namespace arl

#endif  // ARL_GREEKS_RISK_HPP
