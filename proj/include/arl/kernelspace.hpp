#ifndef ARL_KERNELSPACE_HPP
#define ARL_KERNELSPACE_HPP

// Signature kernel, Nystrom compression onto landmark signatures and the
// whitening metric used for every distance between compressed proxies.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "arl/errors.hpp"
#include "arl/rng.hpp"
#include "arl/tensor_algebra.hpp"

namespace arl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline double sig_kernel(const TruncTensor& a, const TruncTensor& b, const LevelWeights& weights) {
  return graded_inner(a, b, weights);
}

inline Eigen::Map<const Vector> as_vector(const TruncTensor& t) {
  return {t.flat().data(), static_cast<Eigen::Index>(t.size())};
}

/// Gram matrix K_ij = kappa(x_i, x_j).
inline Matrix gram_matrix(const std::vector<TruncTensor>& xs, const LevelWeights& weights) {
  const auto n = static_cast<Eigen::Index>(xs.size());
  Matrix k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      k(i, j) = k(j, i) = sig_kernel(xs[static_cast<std::size_t>(i)], xs[static_cast<std::size_t>(j)], weights);
    }
  }
  return k;
}

/// (S + shift I)^{-1/2} for symmetric S via its eigendecomposition.
inline Matrix inverse_sqrt_shifted(const Matrix& s, double shift) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(s + shift * Matrix::Identity(s.rows(), s.cols()));
  if (eig.info() != Eigen::Success) throw NumericError("inverse_sqrt_shifted: eigendecomposition failed");
  Vector lam = eig.eigenvalues();
  if (lam.minCoeff() <= 0.0) throw NumericError("inverse_sqrt_shifted: matrix not positive definite after shift");
  const Vector inv_sqrt = lam.array().rsqrt();
  return eig.eigenvectors() * inv_sqrt.asDiagonal() * eig.eigenvectors().transpose();
}

/// Landmark set plus the whitener W = (K_MM + ridge I)^{-1/2}.
class NystromMap {
 public:
  NystromMap() = default;

  const std::vector<TruncTensor>& landmarks() const { return landmarks_; }
  const Matrix& whitener() const { return whitener_; }
  const Matrix& gram() const { return gram_; }
  const LevelWeights& level_weights() const { return weights_; }
  double ridge() const { return ridge_; }
  int channels() const { return landmarks_.front().channels(); }
  int degree() const { return landmarks_.front().degree(); }
  Eigen::Index dim() const { return whitener_.rows(); }
  std::size_t raw_size() const { return landmarks_.front().size(); }

  /// Condition number of K_MM + ridge I.
  double condition_number() const { return condition_; }
  /// Set when duplicate or nearly dependent landmarks leave the ridge doing the work.
  bool ill_conditioned() const { return condition_ > 1e12; }

  /// Kernel evaluations [kappa(g, zeta_1), ..., kappa(g, zeta_M)].
  Vector kernel_vector(const TruncTensor& g) const {
    check_shape(g);
    return weighted_landmarks_ * as_vector(g);
  }

  /// W [kappa(g, zeta_j)]_j.  Linear in g.
  Vector compress(const TruncTensor& g) const {
    check_shape(g);
    return projector_ * as_vector(g);
  }

  /// First `count` coordinates of compress(g).
  Vector compress_head(const TruncTensor& g, Eigen::Index count) const {
    check_shape(g);
    if (count > dim()) throw DimensionError("NystromMap::compress_head: count exceeds dimension");
    return projector_.topRows(count) * as_vector(g);
  }

  /// The linear map g -> compress(g) as an M x raw_size matrix.
  const Matrix& projector() const { return projector_; }

  /// Raw-space representative r with <r, g>_flat = <u, compress(g)>.
  TruncTensor pullback(const Vector& u) const {
    if (u.size() != dim()) throw DimensionError("NystromMap::pullback: covector length mismatch");
    Vector raw = projector_.transpose() * u;
    return TruncTensor::from_flat(channels(), degree(), std::span<const double>(raw.data(), raw.size()));
  }

  friend NystromMap build_nystrom(std::vector<TruncTensor> landmarks, double ridge, LevelWeights weights);

 private:
  void check_shape(const TruncTensor& g) const {
    if (g.channels() != channels() || g.degree() != degree()) {
      throw DimensionError("NystromMap: tensor shape (c=" + std::to_string(g.channels()) + ",k=" +
                           std::to_string(g.degree()) + ") does not match landmarks");
    }
  }

  std::vector<TruncTensor> landmarks_;
  LevelWeights weights_;
  double ridge_ = 0.0;
  double condition_ = 1.0;
  Matrix gram_;
  Matrix whitener_;
  Matrix weighted_landmarks_;  // M x raw, row j = Lambda zeta_j
  Matrix projector_;           // W * weighted_landmarks_
};

inline NystromMap build_nystrom(std::vector<TruncTensor> landmarks, double ridge, LevelWeights weights) {
  if (landmarks.empty()) throw ConfigurationError("build_nystrom: need at least one landmark");
  if (!(ridge > 0.0)) throw ConfigurationError("build_nystrom: ridge must be > 0");
  const TruncTensor& first = landmarks.front();
  validate_level_weights(weights, first.degree());
  for (const auto& z : landmarks) first.require_same_shape(z, "build_nystrom");

  NystromMap map;
  const auto m = static_cast<Eigen::Index>(landmarks.size());
  const auto raw = static_cast<Eigen::Index>(first.size());
  map.weighted_landmarks_.resize(m, raw);
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto& z = landmarks[static_cast<std::size_t>(j)];
    for (int lvl = 0; lvl <= z.degree(); ++lvl) {
      auto block = z.level(lvl);
      const auto off = static_cast<Eigen::Index>(z.offset(lvl));
      for (std::size_t p = 0; p < block.size(); ++p) {
        map.weighted_landmarks_(j, off + static_cast<Eigen::Index>(p)) = weights[lvl] * block[p];
      }
    }
  }
  map.gram_ = gram_matrix(landmarks, weights);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(map.gram_ + ridge * Matrix::Identity(m, m));
  if (eig.info() != Eigen::Success) throw NumericError("build_nystrom: eigendecomposition failed");
  const Vector lam = eig.eigenvalues();
  if (lam.minCoeff() <= 0.0) throw NumericError("build_nystrom: shifted Gram matrix not positive definite");
  map.condition_ = lam.maxCoeff() / lam.minCoeff();
  map.whitener_ = eig.eigenvectors() * lam.array().rsqrt().matrix().asDiagonal() * eig.eigenvectors().transpose();
  map.projector_ = map.whitener_ * map.weighted_landmarks_;
  map.landmarks_ = std::move(landmarks);
  map.weights_ = std::move(weights);
  map.ridge_ = ridge;
  return map;
}

/// 1e-6 * trace(K) / M.
inline double default_ridge(const std::vector<TruncTensor>& landmarks, const LevelWeights& weights) {
  double trace = 0.0;
  for (const auto& z : landmarks) trace += sig_kernel(z, z, weights);
  return std::max(1e-6 * trace / static_cast<double>(landmarks.size()), 1e-300);
}

/// Reservoir sample of `count` indices out of `population` (algorithm R),
/// driven by one counter-based stream.
inline std::vector<std::size_t> reservoir_sample(std::size_t population, std::size_t count, std::uint64_t seed) {
  if (count > population) throw ConfigurationError("reservoir_sample: count exceeds population");
  std::vector<std::size_t> picked(count);
  for (std::size_t i = 0; i < count; ++i) picked[i] = i;
  StreamRng rng(seed, 0x5EED'0001ull);
  for (std::size_t i = count; i < population; ++i) {
    const std::uint64_t j = rng.below(i + 1);
    if (j < count) picked[j] = i;
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

/// Whitening metric Q = (Sigma + lambda I)^{-1/2} on compressed coordinates.
struct AvnsgMetric {
  Matrix precision;
  Vector mean;
  double lambda = 0.0;

  Eigen::Index dim() const { return precision.rows(); }

  /// Q u.
  Vector whiten(const Vector& u) const { return precision * u; }
};

inline AvnsgMetric fit_avnsg(const Matrix& features, double lambda) {
  if (features.rows() < 2) throw InsufficientDataError("fit_avnsg: need at least 2 samples");
  if (!(lambda > 0.0)) throw ConfigurationError("fit_avnsg: lambda must be > 0");
  AvnsgMetric metric;
  metric.lambda = lambda;
  metric.mean = features.colwise().mean().transpose();
  const Matrix centered = features.rowwise() - metric.mean.transpose();
  const Matrix cov = (centered.transpose() * centered) / static_cast<double>(features.rows() - 1);
  metric.precision = inverse_sqrt_shifted(cov, lambda);
  return metric;
}

/// Metric from a given precision matrix (must be symmetric positive definite).
inline AvnsgMetric metric_from_precision(Matrix precision, double lambda = 0.0) {
  if (precision.rows() != precision.cols()) throw DimensionError("metric_from_precision: matrix not square");
  AvnsgMetric m;
  m.precision = std::move(precision);
  m.mean = Vector::Zero(m.precision.rows());
  m.lambda = lambda;
  return m;
}

inline double q_norm_squared(const AvnsgMetric& metric, const Vector& u) {
  if (u.size() != metric.dim()) throw DimensionError("q_norm: vector length does not match metric");
  return u.dot(metric.precision * u);
}

inline double q_norm(const AvnsgMetric& metric, const Vector& u) { return std::sqrt(std::max(0.0, q_norm_squared(metric, u))); }

/// sqrt((u-v)^T Q (u-v)).
inline double q_distance(const AvnsgMetric& metric, const Vector& u, const Vector& v) {
  if (u.size() != v.size()) throw DimensionError("q_distance: vector lengths differ");
  return q_norm(metric, u - v);
}

/// Metrics fitted per horizon grid point, refitted every `cadence` points
/// (cadence 0: a single metric for the whole horizon).
class MetricFamily {
 public:
  MetricFamily() = default;
  MetricFamily(std::vector<std::size_t> anchors, std::vector<AvnsgMetric> metrics)
      : anchors_(std::move(anchors)), metrics_(std::move(metrics)) {
    if (anchors_.empty() || anchors_.size() != metrics_.size()) {
      throw ConfigurationError("MetricFamily: anchors and metrics must be non-empty and aligned");
    }
  }
  explicit MetricFamily(AvnsgMetric single) : anchors_{0}, metrics_{std::move(single)} {}

  /// Metric in force at grid index j (latest anchor <= j).
  const AvnsgMetric& at(std::size_t j) const {
    std::size_t pick = 0;
    for (std::size_t i = 0; i < anchors_.size(); ++i) {
      if (anchors_[i] <= j) pick = i;
    }
    return metrics_[pick];
  }
  const AvnsgMetric& terminal() const { return metrics_.back(); }
  std::size_t size() const { return metrics_.size(); }

 private:
  std::vector<std::size_t> anchors_;
  std::vector<AvnsgMetric> metrics_;
};

}  // namespace arl

#endif  // ARL_KERNELSPACE_HPP
