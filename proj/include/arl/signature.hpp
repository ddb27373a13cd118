#ifndef ARL_SIGNATURE_HPP
#define ARL_SIGNATURE_HPP

// Marcus signatures of time-augmented cadlag paths.
//
// Channel 0 of every signature is the (scaled) clock; channels 1..d are the
// path coordinates.  A step between consecutive observations is traversed as
// follows.
//   In rectilinear mode, or when the target point is jump-flagged:
//       clock advance first, then an instantaneous (zero-time) spatial move
//       landing on the new point at its timestamp;
//   In linear mode without a jump flag:
//       the straight segment in (t, x) jointly.
// A zero-time spatial move is exactly the Marcus factor exp(0, dx).

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "arl/errors.hpp"
#include "arl/tensor_algebra.hpp"

namespace arl {

enum class InterpolationMode { rectilinear, linear };

inline InterpolationMode parse_interpolation_mode(const std::string& s) {
  if (s == "rectilinear") return InterpolationMode::rectilinear;
  if (s == "linear") return InterpolationMode::linear;
  throw ConfigurationError("unknown interpolation mode '" + s + "' (expected rectilinear|linear)");
}

struct SignatureOptions {
  int degree = 4;
  InterpolationMode mode = InterpolationMode::rectilinear;
  /// Clock increments are multiplied by this; set to 1/horizon to keep the
  /// time channel O(1).
  double time_scale = 1.0;
  /// When false the clock channel receives zero increments (the channel is
  /// still present so shapes do not change).
  bool time_augment = true;

  double clock(double dt) const { return time_augment ? time_scale * dt : 0.0; }
};

/// Timestamped, jump-marked sample path in R^d.
class CadlagPath {
 public:
  CadlagPath() = default;
  explicit CadlagPath(int dim) : dim_(dim) {
    if (dim < 1) throw ConfigurationError("CadlagPath: dim must be >= 1");
  }

  int dim() const { return dim_; }
  std::size_t size() const { return times_.size(); }
  bool empty() const { return times_.empty(); }

  double t(std::size_t i) const { return times_[i]; }
  std::span<const double> x(std::size_t i) const {
    return {values_.data() + i * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
  }
  bool jump(std::size_t i) const { return jumps_[i] != 0; }

  double start_time() const { return times_.front(); }
  double end_time() const { return times_.back(); }
  const std::vector<double>& times() const { return times_; }

  void push_back(double t, std::span<const double> x, bool jump = false) {
    if (static_cast<int>(x.size()) != dim_) {
      throw DimensionError("CadlagPath::push_back: state has " + std::to_string(x.size()) +
                           " entries, path dim is " + std::to_string(dim_));
    }
    if (!std::isfinite(t)) throw NumericError("CadlagPath::push_back: non-finite time");
    for (double v : x) {
      if (!std::isfinite(v)) throw NumericError("CadlagPath::push_back: non-finite coordinate at t=" + std::to_string(t));
    }
    if (times_.empty()) {
      if (jump) throw DomainError("CadlagPath: first point cannot carry a jump flag");
    } else if (!(t > times_.back())) {
      throw OrderingError("CadlagPath: times must be strictly increasing (" + std::to_string(t) +
                          " after " + std::to_string(times_.back()) + ")");
    }
    times_.push_back(t);
    values_.insert(values_.end(), x.begin(), x.end());
    jumps_.push_back(jump ? 1 : 0);
  }

  /// Reserve storage for n points.
  void reserve(std::size_t n) {
    times_.reserve(n);
    values_.reserve(n * static_cast<std::size_t>(dim_));
    jumps_.reserve(n);
  }

 private:
  int dim_ = 0;
  std::vector<double> times_;
  std::vector<double> values_;
  std::vector<char> jumps_;
};

/// exp of the level-1 tensor (clock(dt), dx).  dt == 0 is a Marcus jump.
inline TruncTensor segment_signature(double dt, std::span<const double> dx, const SignatureOptions& opts) {
  if (dt < 0.0) throw DomainError("segment_signature: negative time increment " + std::to_string(dt));
  std::vector<double> v(dx.size() + 1);
  v[0] = opts.clock(dt);
  std::copy(dx.begin(), dx.end(), v.begin() + 1);
  return multiply_by_exp_level1(identity(static_cast<int>(v.size()), opts.degree), v);
}

namespace detail {

/// g (x) (factor of the part [a, b] of step i -> i+1).  `reaches_end` says
/// whether b is the step's right endpoint (where a rectilinear/jump move lands).
inline void apply_step(TruncTensor& g, double a, double b, double t_start, double t_end,
                       std::span<const double> x_start, std::span<const double> x_end, bool jump,
                       const SignatureOptions& opts, std::vector<double>& scratch) {
  const std::size_t d = x_start.size();
  scratch.assign(d + 1, 0.0);
  const bool reaches_end = (b == t_end);
  if (opts.mode == InterpolationMode::rectilinear || jump) {
    if (b > a) {
      scratch[0] = opts.clock(b - a);
      if (scratch[0] != 0.0) g = multiply_by_exp_level1(g, scratch);
    }
    if (reaches_end) {
      scratch[0] = 0.0;
      bool moved = false;
      for (std::size_t j = 0; j < d; ++j) {
        scratch[j + 1] = x_end[j] - x_start[j];
        moved = moved || scratch[j + 1] != 0.0;
      }
      if (moved) g = multiply_by_exp_level1(g, scratch);
    }
    return;
  }
  if (!(b > a)) return;
  const double frac = (b - a) / (t_end - t_start);
  scratch[0] = opts.clock(b - a);
  for (std::size_t j = 0; j < d; ++j) scratch[j + 1] = frac * (x_end[j] - x_start[j]);
  g = multiply_by_exp_level1(g, scratch);
}

}  // namespace detail

/// Ordered product of step factors over [t0, t1].  Jumps landing exactly at
/// t0 are excluded and jumps landing at t1 included (right continuity).
inline TruncTensor path_signature(const CadlagPath& path, double t0, double t1, const SignatureOptions& opts) {
  if (path.empty()) throw RangeError("path_signature: empty path");
  if (!(t0 <= t1) || t0 < path.start_time() || t1 > path.end_time()) {
    std::ostringstream msg;
    msg << "path_signature: interval [" << t0 << ", " << t1 << "] outside path span [" << path.start_time()
        << ", " << path.end_time() << "]";
    throw RangeError(msg.str());
  }
  TruncTensor g = identity(path.dim() + 1, opts.degree);
  std::vector<double> scratch;
  const auto& ts = path.times();
  // first step whose right endpoint lies strictly after t0
  std::size_t i = static_cast<std::size_t>(std::upper_bound(ts.begin(), ts.end(), t0) - ts.begin());
  for (; i < path.size(); ++i) {
    const double ts0 = ts[i - 1];
    const double ts1 = ts[i];
    const double a = std::max(t0, ts0);
    const double b = std::min(t1, ts1);
    if (a > t1) break;
    detail::apply_step(g, a, b, ts0, ts1, path.x(i - 1), path.x(i), path.jump(i), opts, scratch);
    if (ts1 >= t1) break;
  }
  return g;
}

/// Signature of the whole path.
inline TruncTensor path_signature(const CadlagPath& path, const SignatureOptions& opts) {
  if (path.empty()) throw RangeError("path_signature: empty path");
  return path_signature(path, path.start_time(), path.end_time(), opts);
}

/// Running signature of the observed history, updated one observation at a time.
struct FilteredProxy {
  TruncTensor sig;
  double anchor_time = 0.0;
  double origin_time = 0.0;
  std::vector<double> anchor_state;
  SignatureOptions options;
};

inline FilteredProxy make_filtered_proxy(double t0, std::span<const double> x0, const SignatureOptions& opts) {
  FilteredProxy p;
  p.sig = identity(static_cast<int>(x0.size()) + 1, opts.degree);
  p.anchor_time = t0;
  p.origin_time = t0;
  p.anchor_state.assign(x0.begin(), x0.end());
  p.options = opts;
  return p;
}

/// Chen update: proxy.sig (x) factor(anchor -> new observation).
inline FilteredProxy incremental_update(const FilteredProxy& proxy, double t, std::span<const double> x, bool jump) {
  if (!(t > proxy.anchor_time)) {
    throw OrderingError("incremental_update: observation at t=" + std::to_string(t) +
                        " does not follow anchor t=" + std::to_string(proxy.anchor_time));
  }
  if (x.size() != proxy.anchor_state.size()) {
    throw DimensionError("incremental_update: state dimension mismatch");
  }
  FilteredProxy next = proxy;
  std::vector<double> scratch;
  detail::apply_step(next.sig, proxy.anchor_time, t, proxy.anchor_time, t, proxy.anchor_state, x, jump,
                     proxy.options, scratch);
  next.anchor_time = t;
  next.anchor_state.assign(x.begin(), x.end());
  return next;
}

/// Fold every observation of `path` into a fresh proxy anchored at its first point.
inline FilteredProxy filter_path(const CadlagPath& path, const SignatureOptions& opts) {
  if (path.empty()) throw RangeError("filter_path: empty path");
  FilteredProxy p = make_filtered_proxy(path.start_time(), path.x(0), opts);
  for (std::size_t i = 1; i < path.size(); ++i) p = incremental_update(p, path.t(i), path.x(i), path.jump(i));
  return p;
}

// --- paths.csv -------------------------------------------------------------
// Columns: path_id, t, x_1..x_d, jump_flag (0/1) [, reward].

inline void write_paths_csv(std::ostream& os, const std::vector<CadlagPath>& paths,
                            const std::vector<std::vector<double>>* rewards = nullptr) {
  if (paths.empty()) return;
  const int d = paths.front().dim();
  os << "path_id,t";
  for (int j = 1; j <= d; ++j) os << ",x_" << j;
  os << ",jump_flag";
  if (rewards) os << ",reward";
  os << '\n';
  os.precision(17);
  for (std::size_t p = 0; p < paths.size(); ++p) {
    const auto& path = paths[p];
    for (std::size_t i = 0; i < path.size(); ++i) {
      os << p << ',' << path.t(i);
      for (double v : path.x(i)) os << ',' << v;
      os << ',' << (path.jump(i) ? 1 : 0);
      if (rewards) os << ',' << (i == 0 ? 0.0 : (*rewards)[p][i - 1]);
      os << '\n';
    }
  }
}

/// Parse paths.csv; returns paths ordered by path_id.  A trailing `reward`
/// column, if present, is ignored.
inline std::vector<CadlagPath> read_paths_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ConfigurationError("paths.csv: empty input");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.size() < 4 || header[0] != "path_id" || header[1] != "t") {
    throw ConfigurationError("paths.csv: header must start with path_id,t");
  }
  const bool has_reward = header.back() == "reward";
  const int d = static_cast<int>(header.size()) - 3 - (has_reward ? 1 : 0);
  if (d < 1 || header[static_cast<std::size_t>(d) + 2] != "jump_flag") {
    throw ConfigurationError("paths.csv: expected x_1..x_d followed by jump_flag");
  }
  std::map<long, CadlagPath> by_id;
  std::vector<double> row;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    row.clear();
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != header.size()) {
      throw DimensionError("paths.csv line " + std::to_string(line_no) + ": wrong number of fields");
    }
    const long id = static_cast<long>(row[0]);
    auto it = by_id.try_emplace(id, CadlagPath(d)).first;
    it->second.push_back(row[1], std::span<const double>(row).subspan(2, static_cast<std::size_t>(d)),
                         row[static_cast<std::size_t>(d) + 2] != 0.0);
  }
  std::vector<CadlagPath> out;
  out.reserve(by_id.size());
  for (auto& [id, path] : by_id) out.push_back(std::move(path));
  return out;
}

}  // namespace arl

#endif  // ARL_SIGNATURE_HPP
