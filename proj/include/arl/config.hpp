#ifndef ARL_CONFIG_HPP
#define ARL_CONFIG_HPP

// INI configuration for the experiment driver.  Every key in the schema is
// required; unknown keys are rejected.  ARL_<SECTION>_<KEY> environment
// variables override (or supply) file values.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "arl/experiments.hpp"
#include "arl/io.hpp"

namespace arl {

class MissingKeyError : public ConfigurationError {
 public:
  explicit MissingKeyError(const std::string& key)
      : ConfigurationError("missing config key: " + key), key_(key) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

inline const std::vector<std::pair<std::string, std::vector<std::string>>>& config_schema() {
  static const std::vector<std::pair<std::string, std::vector<std::string>>> schema{
      {"run", {"seed"}},
      {"anjd",
       {"dim", "x0", "drift_base", "vol", "jump_intensity", "jump_mean", "jump_scale", "action_exposure",
        "reward_loadings", "memory_coords", "memory_gain", "horizon", "steps", "action", "burn_in_steps",
        "reward_channel"}},
      {"signature", {"degree", "mode"}},
      {"kernel", {"landmarks", "pilot_paths", "checkpoints", "ridge", "factorial_weights", "metric_lambda_rel"}},
      {"scf",
       {"train_paths", "rounds", "depth", "proxy_inputs", "junction_inputs", "epochs", "learning_rate", "beta1",
        "beta2", "epsilon", "weight_decay", "fd_step", "eta", "warm_start", "warm_start_ridge",
        "divergence_threshold", "rate_sizes", "rate_repeats"}},
      {"td",
       {"gamma", "alpha", "max_iterations", "tolerance", "ridge_fallback", "baseline_episodes", "baseline_passes",
        "variance_seeds", "variance_paths", "reward_ridge", "realizable_landmarks", "realizable_steps",
        "realizable_step_scale"}},
      {"risk", {"alpha_tail", "beta_risk", "action_step", "paths"}},
      {"greeks", {"points", "directions", "theta_step"}},
      {"analysis",
       {"contraction_trials", "fixed_point_tol", "stress_scales", "stress_paths", "bound_b", "lyapunov_seeds"}},
  };
  return schema;
}

/// Flat "section.key" -> value view after validation and overrides.
struct ConfigValues {
  std::map<std::string, std::string> values;

  const std::string& raw(const std::string& key) const {
    auto it = values.find(key);
    if (it == values.end()) throw MissingKeyError(key);
    return it->second;
  }

  double number(const std::string& key) const {
    const std::string& s = raw(key);
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigurationError("config key " + key + ": expected a number, got '" + s + "'");
    }
  }

  std::uint64_t unsigned_integer(const std::string& key) const {
    const std::string& s = raw(key);
    try {
      std::size_t used = 0;
      if (!s.empty() && s[0] == '-') throw std::invalid_argument(s);
      const unsigned long long v = std::stoull(s, &used, 0);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigurationError("config key " + key + ": expected a non-negative integer, got '" + s + "'");
    }
  }

  int integer(const std::string& key) const {
    const std::uint64_t v = unsigned_integer(key);
    if (v > 1000000000ull) throw ConfigurationError("config key " + key + ": value too large");
    return static_cast<int>(v);
  }

  bool boolean(const std::string& key) const {
    const std::string& s = raw(key);
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigurationError("config key " + key + ": expected true or false, got '" + s + "'");
  }

  std::vector<double> list(const std::string& key) const {
    std::vector<double> out;
    std::stringstream ss(raw(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto b = item.find_first_not_of(" \t");
      const auto e = item.find_last_not_of(" \t");
      if (b == std::string::npos) throw ConfigurationError("config key " + key + ": empty list entry");
      const std::string tok = item.substr(b, e - b + 1);
      try {
        std::size_t used = 0;
        out.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ConfigurationError("config key " + key + ": bad list entry '" + tok + "'");
      }
    }
    return out;
  }

  Vector vector(const std::string& key, std::size_t expected) const {
    const auto xs = list(key);
    if (xs.size() != expected) {
      throw ConfigurationError("config key " + key + ": expected " + std::to_string(expected) + " entries, got " +
                               std::to_string(xs.size()));
    }
    return Eigen::Map<const Vector>(xs.data(), static_cast<Eigen::Index>(xs.size()));
  }

  /// Canonical text (sorted key=value lines) the config hash is computed
  /// from.  The seed is reported separately and left out.
  std::string canonical() const {
    std::string out;
    for (const auto& [k, v] : values) {
      if (k != "run.seed") out += k + "=" + v + "\n";
    }
    return out;
  }

  std::string hash() const { return hex64(fnv1a64(canonical())); }
};

inline std::string env_override_name(const std::string& section, const std::string& key) {
  std::string name = "ARL_" + section + "_" + key;
  for (auto& ch : name) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return name;
}

inline ConfigValues read_config_values(const boost::property_tree::ptree& tree) {
  ConfigValues cv;
  const auto& schema = config_schema();
  for (const auto& [section, node] : tree) {
    auto sec = std::find_if(schema.begin(), schema.end(), [&](const auto& s) { return s.first == section; });
    if (node.data().size() && node.empty()) throw ConfigurationError("config: key '" + section + "' outside any section");
    if (sec == schema.end()) throw ConfigurationError("config: unknown section [" + section + "]");
    for (const auto& [key, leaf] : node) {
      if (std::find(sec->second.begin(), sec->second.end(), key) == sec->second.end()) {
        throw ConfigurationError("config: unknown key " + section + "." + key);
      }
      cv.values[section + "." + key] = leaf.data();
    }
  }
  for (const auto& [section, keys] : schema) {
    for (const auto& key : keys) {
      if (const char* env = std::getenv(env_override_name(section, key).c_str())) cv.values[section + "." + key] = env;
    }
  }
  for (const auto& [section, keys] : schema) {
    for (const auto& key : keys) {
      if (!cv.values.count(section + "." + key)) throw MissingKeyError(section + "." + key);
    }
  }
  return cv;
}

inline ConfigValues load_config_values(const std::string& path) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigurationError("config: " + std::string(e.what()));
  }
  return read_config_values(tree);
}

inline ExperimentConfig to_experiment_config(const ConfigValues& cv) {
  ExperimentConfig cfg;
  cfg.seed = cv.unsigned_integer("run.seed");

  const int d = cv.integer("anjd.dim");
  if (d < 1) throw ConfigurationError("config key anjd.dim: must be >= 1");
  const auto du = static_cast<std::size_t>(d);
  EnvConfig& env = cfg.env;
  AnjdParams& p = env.params;
  p = AnjdParams::quiet(d);
  env.x0 = cv.vector("anjd.x0", du);
  p.drift_base = cv.vector("anjd.drift_base", du);
  const Vector tri = cv.vector("anjd.vol", du * (du + 1) / 2);
  for (int i = 0, q = 0; i < d; ++i) {
    for (int j = 0; j <= i; ++j) p.vol(i, j) = tri(q++);
  }
  p.jump_intensity = cv.number("anjd.jump_intensity");
  p.jump_mean = cv.vector("anjd.jump_mean", du);
  p.jump_scale = cv.vector("anjd.jump_scale", du);
  p.action_exposure = cv.vector("anjd.action_exposure", du);
  p.reward_loadings = cv.vector("anjd.reward_loadings", du);
  env.horizon = cv.number("anjd.horizon");
  env.steps = cv.unsigned_integer("anjd.steps");
  env.action = cv.number("anjd.action");
  env.burn_in_steps = cv.unsigned_integer("anjd.burn_in_steps");
  env.reward_channel = cv.boolean("anjd.reward_channel");
  if (!(env.horizon > 0.0)) throw ConfigurationError("config key anjd.horizon: must be > 0");
  if (env.steps < 2) throw ConfigurationError("config key anjd.steps: must be >= 2");

  KernelConfig& k = cfg.kernel;
  k.degree = cv.integer("signature.degree");
  k.mode = parse_interpolation_mode(cv.raw("signature.mode"));
  k.landmarks = cv.unsigned_integer("kernel.landmarks");
  k.pilot_paths = cv.unsigned_integer("kernel.pilot_paths");
  k.checkpoints = cv.unsigned_integer("kernel.checkpoints");
  k.ridge = cv.number("kernel.ridge");
  k.factorial_weights = cv.boolean("kernel.factorial_weights");
  k.metric_lambda_rel = cv.number("kernel.metric_lambda_rel");
  if (k.degree < 1) throw ConfigurationError("config key signature.degree: must be >= 1");
  if (k.landmarks < 1) throw ConfigurationError("config key kernel.landmarks: must be >= 1");

  // Memory coupling acts on the leading compressed coordinates only.
  const std::size_t mem = cv.unsigned_integer("anjd.memory_coords");
  const Vector gain = cv.vector("anjd.memory_gain", du * mem);
  if (mem > k.landmarks) throw ConfigurationError("config key anjd.memory_coords: exceeds kernel.landmarks");
  p.drift_memory_gain = Matrix::Zero(d, mem > 0 ? static_cast<Eigen::Index>(k.landmarks) : 0);
  for (std::size_t i = 0; i < du; ++i) {
    for (std::size_t j = 0; j < mem; ++j) {
      p.drift_memory_gain(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = gain(static_cast<Eigen::Index>(i * mem + j));
    }
  }

  ScfConfig& s = cfg.scf;
  s.train_paths = cv.unsigned_integer("scf.train_paths");
  s.rounds = cv.integer("scf.rounds");
  s.depth = cv.integer("scf.depth");
  s.proxy_inputs = cv.integer("scf.proxy_inputs");
  s.junction_inputs = cv.integer("scf.junction_inputs");
  s.trainer.epochs = cv.integer("scf.epochs");
  s.trainer.learning_rate = cv.number("scf.learning_rate");
  s.trainer.beta1 = cv.number("scf.beta1");
  s.trainer.beta2 = cv.number("scf.beta2");
  s.trainer.epsilon = cv.number("scf.epsilon");
  s.trainer.weight_decay = cv.number("scf.weight_decay");
  s.trainer.fd_step = cv.number("scf.fd_step");
  s.trainer.eta = cv.number("scf.eta");
  s.trainer.warm_start = cv.boolean("scf.warm_start");
  s.trainer.warm_start_ridge = cv.number("scf.warm_start_ridge");
  s.trainer.divergence_threshold = cv.number("scf.divergence_threshold");
  s.rate_sizes.clear();
  for (double n : cv.list("scf.rate_sizes")) {
    if (!(n >= 2.0) || n != std::floor(n)) throw ConfigurationError("config key scf.rate_sizes: entries must be integers >= 2");
    s.rate_sizes.push_back(static_cast<std::size_t>(n));
  }
  if (s.rate_sizes.size() < 2) throw ConfigurationError("config key scf.rate_sizes: need at least two sizes");
  s.rate_repeats = cv.integer("scf.rate_repeats");
  if (s.rounds < 1 || s.rate_repeats < 1 || s.train_paths < 2) {
    throw ConfigurationError("config section scf: rounds, rate_repeats must be >= 1 and train_paths >= 2");
  }
  if (static_cast<std::size_t>(s.proxy_inputs) > k.landmarks || static_cast<std::size_t>(s.junction_inputs) > k.landmarks) {
    throw ConfigurationError("config section scf: generator inputs exceed kernel.landmarks");
  }

  TdConfig& t = cfg.td;
  t.gamma = cv.number("td.gamma");
  t.alpha = cv.number("td.alpha");
  t.max_iterations = cv.integer("td.max_iterations");
  t.tolerance = cv.number("td.tolerance");
  t.ridge_fallback = cv.number("td.ridge_fallback");
  t.baseline_episodes = cv.unsigned_integer("td.baseline_episodes");
  t.baseline_passes = cv.integer("td.baseline_passes");
  t.variance_seeds = cv.unsigned_integer("td.variance_seeds");
  t.variance_paths = cv.unsigned_integer("td.variance_paths");
  t.reward_ridge = cv.number("td.reward_ridge");
  t.realizable_landmarks = cv.unsigned_integer("td.realizable_landmarks");
  t.realizable_steps = cv.unsigned_integer("td.realizable_steps");
  t.realizable_step_scale = cv.number("td.realizable_step_scale");
  if (!(t.gamma >= 0.0 && t.gamma < 1.0)) throw ConfigurationError("config key td.gamma: must lie in [0, 1)");
  if (t.max_iterations < 1 || t.baseline_episodes < 1 || t.baseline_passes < 1) {
    throw ConfigurationError("config section td: iteration, episode and pass counts must be >= 1");
  }

  RiskSettings& r = cfg.risk;
  r.alpha_tail = cv.number("risk.alpha_tail");
  r.beta_risk = cv.number("risk.beta_risk");
  r.action_step = cv.number("risk.action_step");
  r.paths = cv.unsigned_integer("risk.paths");
  if (!(r.action_step > 0.0)) throw ConfigurationError("config key risk.action_step: must be > 0");

  GreeksSettings& g = cfg.greeks;
  g.points = cv.unsigned_integer("greeks.points");
  g.directions = cv.unsigned_integer("greeks.directions");
  g.theta_step = cv.number("greeks.theta_step");

  AnalysisConfig& a = cfg.analysis;
  a.contraction_trials = cv.unsigned_integer("analysis.contraction_trials");
  a.fixed_point_tol = cv.number("analysis.fixed_point_tol");
  a.stress_scales = cv.list("analysis.stress_scales");
  a.stress_paths = cv.unsigned_integer("analysis.stress_paths");
  a.bound_b = cv.number("analysis.bound_b");
  a.lyapunov_seeds = cv.unsigned_integer("analysis.lyapunov_seeds");
  if (a.stress_scales.empty()) throw ConfigurationError("config key analysis.stress_scales: empty");

  p.validate();
  return cfg;
}

}  // namespace arl

#endif  // ARL_CONFIG_HPP
