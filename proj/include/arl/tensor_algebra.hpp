#ifndef ARL_TENSOR_ALGEBRA_HPP
#define ARL_TENSOR_ALGEBRA_HPP

// Dense arithmetic in the degree-k truncated tensor algebra over c channels.
//
// Coefficients live in one flat array, level by level.  Inside level n the
// multi-index (i_1, ..., i_n) is stored row-major: i_1 varies slowest, so the
// flat position is i_1 c^{n-1} + ... + i_n.  Serialised tensors depend on this
// order.

#include <cmath>
#include <cstddef>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "arl/errors.hpp"

namespace arl {

/// Number of coefficients in one level: c^n.
inline std::size_t level_size(int channels, int level) {
  std::size_t n = 1;
  for (int i = 0; i < level; ++i) n *= static_cast<std::size_t>(channels);
  return n;
}

/// Total flat length sum_{i=0}^{k} c^i.
inline std::size_t tensor_size(int channels, int degree) {
  std::size_t total = 0;
  for (int i = 0; i <= degree; ++i) total += level_size(channels, i);
  return total;
}

class TruncTensor {
 public:
  TruncTensor() = default;

  /// Zero tensor of the given shape.
  TruncTensor(int channels, int degree) : channels_(channels), degree_(degree) {
    if (channels < 1 || degree < 1) {
      throw ConfigurationError("TruncTensor: channels and degree must be >= 1 (got c=" +
                               std::to_string(channels) + ", k=" + std::to_string(degree) + ")");
    }
    offsets_.resize(static_cast<std::size_t>(degree) + 2);
    offsets_[0] = 0;
    for (int i = 0; i <= degree; ++i) offsets_[i + 1] = offsets_[i] + level_size(channels, i);
    data_.assign(offsets_.back(), 0.0);
  }

  static TruncTensor zero(int channels, int degree) { return TruncTensor(channels, degree); }

  static TruncTensor identity(int channels, int degree) {
    TruncTensor t(channels, degree);
    t.data_[0] = 1.0;
    return t;
  }

  /// Tensor whose level-1 block is `v` and every other level is zero.
  static TruncTensor from_level1(std::span<const double> v, int degree) {
    TruncTensor t(static_cast<int>(v.size()), degree);
    std::copy(v.begin(), v.end(), t.data_.begin() + 1);
    return t;
  }

  /// Rebuild from the flat coefficient layout.
  static TruncTensor from_flat(int channels, int degree, std::span<const double> flat) {
    TruncTensor t(channels, degree);
    if (flat.size() != t.size()) {
      throw DimensionError("TruncTensor::from_flat: expected " + std::to_string(t.size()) +
                           " coefficients, got " + std::to_string(flat.size()));
    }
    std::copy(flat.begin(), flat.end(), t.data_.begin());
    return t;
  }

  int channels() const { return channels_; }
  int degree() const { return degree_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t offset(int level) const { return offsets_[static_cast<std::size_t>(level)]; }

  std::span<double> level(int i) {
    return {data_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }
  std::span<const double> level(int i) const {
    return {data_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }

  double scalar() const { return data_[0]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }
  const std::vector<double>& coefficients() const { return data_; }

  bool same_shape(const TruncTensor& o) const {
    return channels_ == o.channels_ && degree_ == o.degree_;
  }

  /// Flat position of a word (i_1, ..., i_n).
  std::size_t index_of(std::span<const int> word) const {
    std::size_t pos = 0;
    for (int letter : word) pos = pos * static_cast<std::size_t>(channels_) + static_cast<std::size_t>(letter);
    return offsets_[word.size()] + pos;
  }

  TruncTensor& operator+=(const TruncTensor& o) {
    require_same_shape(o, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  TruncTensor& operator-=(const TruncTensor& o) {
    require_same_shape(o, "operator-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  TruncTensor& operator*=(double s) {
    for (double& x : data_) x *= s;
    return *this;
  }

  friend TruncTensor operator+(TruncTensor a, const TruncTensor& b) { return a += b; }
  friend TruncTensor operator-(TruncTensor a, const TruncTensor& b) { return a -= b; }
  friend TruncTensor operator*(TruncTensor a, double s) { return a *= s; }
  friend TruncTensor operator*(double s, TruncTensor a) { return a *= s; }
  friend TruncTensor operator-(TruncTensor a) { return a *= -1.0; }

  friend bool operator==(const TruncTensor& a, const TruncTensor& b) {
    return a.channels_ == b.channels_ && a.degree_ == b.degree_ && a.data_ == b.data_;
  }

  void require_same_shape(const TruncTensor& o, const char* what) const {
    if (!same_shape(o)) {
      std::ostringstream msg;
      msg << what << ": shape mismatch (c=" << channels_ << ",k=" << degree_ << ") vs (c="
          << o.channels_ << ",k=" << o.degree_ << ")";
      throw DimensionError(msg.str());
    }
  }

 private:
  int channels_ = 0;
  int degree_ = 0;
  std::vector<std::size_t> offsets_;
  std::vector<double> data_;
};

/// Tolerance used when checking the scalar part of group-like / Lie-like inputs.
inline constexpr double kScalarTolerance = 1e-12;

inline bool is_group_like(const TruncTensor& g, double tol = kScalarTolerance) {
  return !g.empty() && std::abs(g.scalar() - 1.0) <= tol;
}
inline bool is_lie_like(const TruncTensor& x, double tol = kScalarTolerance) {
  return !x.empty() && std::abs(x.scalar()) <= tol;
}

inline TruncTensor identity(int channels, int degree) { return TruncTensor::identity(channels, degree); }

inline TruncTensor add(const TruncTensor& a, const TruncTensor& b) { return a + b; }
inline TruncTensor scale(const TruncTensor& a, double s) { return a * s; }

/// Truncated tensor product: level n of the result is sum_{i+j=n} a_i (x) b_j.
inline TruncTensor trunc_product(const TruncTensor& a, const TruncTensor& b) {
  a.require_same_shape(b, "trunc_product");
  const int c = a.channels();
  const int k = a.degree();
  TruncTensor out(c, k);
  for (int n = 0; n <= k; ++n) {
    auto dst = out.level(n);
    for (int i = 0; i <= n; ++i) {
      auto ai = a.level(i);
      auto bj = b.level(n - i);
      const std::size_t nb = bj.size();
      for (std::size_t p = 0; p < ai.size(); ++p) {
        const double ap = ai[p];
        if (ap == 0.0) continue;
        double* row = dst.data() + p * nb;
        for (std::size_t q = 0; q < nb; ++q) row[q] += ap * bj[q];
      }
    }
  }
  return out;
}

namespace detail {

inline void require_lie(const TruncTensor& x, const char* what) {
  if (!is_lie_like(x)) {
    throw DomainError(std::string(what) + ": scalar part must be 0 (got " + std::to_string(x.scalar()) + ")");
  }
}

inline void require_group(const TruncTensor& g, const char* what) {
  if (!is_group_like(g)) {
    throw DomainError(std::string(what) + ": scalar part must be 1 (got " + std::to_string(g.scalar()) + ")");
  }
}

}  // namespace detail

/// exp(x) = sum_{i<=k} x^{(x)i} / i!, evaluated by Horner's rule.
inline TruncTensor trunc_exp(const TruncTensor& x) {
  detail::require_lie(x, "trunc_exp");
  const int k = x.degree();
  TruncTensor acc = identity(x.channels(), k);
  for (int i = k; i >= 1; --i) {
    acc = trunc_product(x, acc);
    acc *= 1.0 / i;
    acc[0] += 1.0;
  }
  acc[0] = 1.0;
  return acc;
}

/// log(g) = sum_{i=1}^{k} (-1)^{i+1} (g-1)^{(x)i} / i.
inline TruncTensor trunc_log(const TruncTensor& g) {
  detail::require_group(g, "trunc_log");
  const int k = g.degree();
  TruncTensor x = g;
  x[0] = 0.0;
  // Horner: x (1 - x (1/2 - x (1/3 - ... )))
  TruncTensor acc = TruncTensor::zero(g.channels(), k);
  for (int i = k; i >= 1; --i) {
    acc = trunc_product(x, acc);
    acc *= -1.0;
    acc[0] += 1.0 / i;
  }
  TruncTensor out = trunc_product(x, acc);
  out[0] = 0.0;
  return out;
}

/// Exact inverse in the truncated algebra via the finite geometric series
/// sum_{i<=k} (1-g)^{(x)i}.
inline TruncTensor group_inverse(const TruncTensor& g) {
  detail::require_group(g, "group_inverse");
  const int k = g.degree();
  TruncTensor y = -g;
  y[0] = 0.0;
  TruncTensor acc = identity(g.channels(), k);
  for (int i = 0; i < k; ++i) {
    acc = trunc_product(y, acc);
    acc[0] += 1.0;
  }
  acc[0] = 1.0;
  return acc;
}

/// Per-level weights for graded inner products.
using LevelWeights = std::vector<double>;

inline LevelWeights unit_level_weights(int degree) { return LevelWeights(static_cast<std::size_t>(degree) + 1, 1.0); }

/// w_i = 1/i!, damping high levels.
inline LevelWeights factorial_level_weights(int degree) {
  LevelWeights w(static_cast<std::size_t>(degree) + 1, 1.0);
  for (int i = 1; i <= degree; ++i) w[i] = w[i - 1] / i;
  return w;
}

inline void validate_level_weights(const LevelWeights& w, int degree) {
  if (w.size() != static_cast<std::size_t>(degree) + 1) {
    throw DimensionError("level weights: expected " + std::to_string(degree + 1) + " entries, got " +
                         std::to_string(w.size()));
  }
  for (double x : w) {
    if (!(x > 0.0) || !std::isfinite(x)) throw ConfigurationError("level weights must be finite and > 0");
  }
}

/// sum_i w_i <a_i, b_i>.
inline double graded_inner(const TruncTensor& a, const TruncTensor& b, const LevelWeights& weights) {
  a.require_same_shape(b, "graded_inner");
  validate_level_weights(weights, a.degree());
  double total = 0.0;
  for (int i = 0; i <= a.degree(); ++i) {
    auto ai = a.level(i);
    auto bi = b.level(i);
    double s = 0.0;
    for (std::size_t p = 0; p < ai.size(); ++p) s += ai[p] * bi[p];
    total += weights[i] * s;
  }
  return total;
}

inline double graded_norm(const TruncTensor& a, const LevelWeights& weights) {
  return std::sqrt(graded_inner(a, a, weights));
}

/// pi_r: zero every level above r.
inline TruncTensor project_to_degree(const TruncTensor& g, int r) {
  if (r < 0 || r > g.degree()) {
    throw ConfigurationError("project_to_degree: r must lie in [0, " + std::to_string(g.degree()) + "]");
  }
  TruncTensor out = g;
  for (std::size_t i = g.offset(r + 1); i < out.size(); ++i) out[i] = 0.0;
  return out;
}

inline double max_abs_diff(const TruncTensor& a, const TruncTensor& b) {
  a.require_same_shape(b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline bool all_finite(const TruncTensor& a) {
  for (double x : a.flat()) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

/// g (x) exp(v) for a pure level-1 increment v, in O(k * size) operations.
inline TruncTensor multiply_by_exp_level1(const TruncTensor& g, std::span<const double> v) {
  if (static_cast<int>(v.size()) != g.channels()) {
    throw DimensionError("multiply_by_exp_level1: increment has " + std::to_string(v.size()) +
                         " entries, tensor has " + std::to_string(g.channels()) + " channels");
  }
  const int k = g.degree();
  const std::size_t c = v.size();
  // acc_k = g; acc_{i-1} = g + (acc_i (x) v) / i
  TruncTensor acc = g;
  TruncTensor next(g.channels(), k);
  for (int i = k; i >= 1; --i) {
    const double inv = 1.0 / i;
    next = g;
    for (int n = 1; n <= k; ++n) {
      auto src = acc.level(n - 1);
      auto dst = next.level(n);
      for (std::size_t p = 0; p < src.size(); ++p) {
        const double a = src[p] * inv;
        if (a == 0.0) continue;
        double* row = dst.data() + p * c;
        for (std::size_t q = 0; q < c; ++q) row[q] += a * v[q];
      }
    }
    std::swap(acc, next);
  }
  return acc;
}

/// Directional derivative of trunc_exp at x along dx:
/// sum_n (1/n!) sum_{i<n} x^i (x) dx (x) x^{n-1-i}.
inline TruncTensor trunc_exp_derivative(const TruncTensor& x, const TruncTensor& dx) {
  detail::require_lie(x, "trunc_exp_derivative");
  x.require_same_shape(dx, "trunc_exp_derivative");
  const int k = x.degree();
  TruncTensor power = identity(x.channels(), k);  // x^{n-1}
  TruncTensor dpower = TruncTensor::zero(x.channels(), k);  // d(x^{n-1})
  TruncTensor out = TruncTensor::zero(x.channels(), k);
  double inv_fact = 1.0;
  for (int n = 1; n <= k; ++n) {
    // d(x^n) = d(x^{n-1}) x + x^{n-1} dx
    TruncTensor next_d = trunc_product(dpower, x) + trunc_product(power, dx);
    power = trunc_product(power, x);
    dpower = std::move(next_d);
    inv_fact /= n;
    out += dpower * inv_fact;
  }
  out[0] = 0.0;
  return out;
}

/// Adjoint of left multiplication h -> a (x) h with respect to the flat
/// Euclidean pairing: returns v with <v, h> = <u, a (x) h> for every h.
inline TruncTensor left_multiplication_adjoint(const TruncTensor& a, const TruncTensor& u) {
  a.require_same_shape(u, "left_multiplication_adjoint");
  const int k = a.degree();
  TruncTensor out(a.channels(), k);
  for (int n = 0; n <= k; ++n) {
    auto dst = out.level(n);
    const std::size_t nv = dst.size();
    for (int i = 0; i + n <= k; ++i) {
      auto ai = a.level(i);
      auto ui = u.level(i + n);
      for (std::size_t p = 0; p < ai.size(); ++p) {
        const double ap = ai[p];
        if (ap == 0.0) continue;
        const double* row = ui.data() + p * nv;
        for (std::size_t v = 0; v < nv; ++v) dst[v] += ap * row[v];
      }
    }
  }
  return out;
}

/// CSV row: channels, degree, then every coefficient in flat order.
inline std::string to_csv_row(const TruncTensor& t) {
  std::ostringstream os;
  os.precision(17);
  os << t.channels() << ',' << t.degree();
  for (double x : t.flat()) os << ',' << x;
  return os.str();
}

inline TruncTensor from_csv_row(const std::string& row) {
  std::vector<double> fields;
  std::stringstream ss(row);
  std::string cell;
  while (std::getline(ss, cell, ',')) fields.push_back(std::stod(cell));
  if (fields.size() < 2) throw DimensionError("tensor CSV row: missing channels/degree");
  const int c = static_cast<int>(fields[0]);
  const int k = static_cast<int>(fields[1]);
  return TruncTensor::from_flat(c, k, std::span<const double>(fields).subspan(2));
}

}  // namespace arl

#endif  // ARL_TENSOR_ALGEBRA_HPP
