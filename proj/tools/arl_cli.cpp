// Experiment driver: configuration, SCF training, TD learning, sensitivities,
// risk and the numerical checks, with every artifact stamped by producer,
// config hash and seed.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "arl/config.hpp"
#include "arl/io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace arl;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

class Run {
 public:
  Run(std::string producer, ConfigValues cv, ExperimentConfig cfg, fs::path out)
      : producer_(std::move(producer)), cv_(std::move(cv)), cfg_(std::move(cfg)), out_(std::move(out)) {}

  ArtifactMeta meta() const { return {producer_, cv_.hash(), cfg_.seed}; }
  const fs::path& out() const { return out_; }
  const char* stage() const { return stage_; }

  void write_json(const fs::path& rel, json body) const {
    json doc;
    doc["meta"] = {{"producer", producer_}, {"config_hash", cv_.hash()}, {"seed", cfg_.seed}};
    for (auto& [k, v] : body.items()) doc[k] = v;
    std::ofstream f(out_ / rel, std::ios::binary);
    if (!f) throw ConfigurationError("cannot open " + (out_ / rel).string() + " for writing");
    f << doc.dump(2) << '\n';
  }

  CsvWriter csv(const fs::path& rel, std::initializer_list<std::string_view> cols) const {
    return CsvWriter((out_ / rel).string(), meta(), cols);
  }

  const World& world() {
    if (!world_) {
      stage_ = "build_world";
      world_ = build_world(cfg_);
    }
    return *world_;
  }

  const ScfOutcome& scf(bool with_rate) {
    if (!scf_ || (with_rate && scf_->rate.empty())) {
      const World& w = world();
      stage_ = "scf";
      scf_ = run_scf(w, with_rate);
      const double grounding = as_vector(scf_->trajectory.elements.front() - identity(w.channels(), w.opts.degree)).cwiseAbs().maxCoeff();
      if (grounding != 0.0) throw NumericError("flow does not start at the identity (deviation " + fmt_double(grounding) + ")");
    }
    return *scf_;
  }

  const TrainedTdOutcome& trained_td() {
    if (!trained_) {
      const auto& s = scf(false);
      stage_ = "td_trained";
      trained_ = run_td_trained(world(), s.trajectory);
    }
    return *trained_;
  }

  const VarianceOutcome& variance() {
    if (!variance_) {
      const auto& t = trained_td();
      stage_ = "variance";
      variance_ = run_variance(world(), t.weights, cfg_.td.variance_seeds, cfg_.td.variance_paths, cfg_.td.gamma);
    }
    return *variance_;
  }

  void emit_scf();
  void emit_td();
  void emit_greeks();
  void emit_analysis();

 private:
  std::string producer_;
  ConfigValues cv_;
  ExperimentConfig cfg_;
  fs::path out_;
  const char* stage_ = "config";
  std::optional<World> world_;
  std::optional<ScfOutcome> scf_;
  std::optional<TrainedTdOutcome> trained_;
  std::optional<VarianceOutcome> variance_;
};

void Run::emit_scf() {
  const ScfOutcome& s = scf(true);
  const World& w = world();
  stage_ = "scf_output";
  fs::create_directories(out_ / "scf");

  {
    auto f = csv("scf/proxy.csv", {"s", "channels", "degree", "coefficients..."});
    for (std::size_t j = 0; j < s.trajectory.elements.size(); ++j) {
      f.cell(s.trajectory.grid[j]).raw(to_csv_row(s.trajectory.elements[j]));
      f.end_row();
    }
  }
  {
    auto f = csv("scf/scf_trace.csv", {"round", "epoch", "score_loss", "scf_loss", "total_loss", "grad_norm", "step_norm"});
    for (std::size_t r = 0; r < s.rounds.size(); ++r) {
      for (const auto& rec : s.rounds[r].trace) {
        f.cell(r).cell(rec.epoch).cell(rec.score_loss).cell(rec.scf_loss).cell(rec.total_loss).cell(rec.grad_norm).cell(rec.step_norm);
        f.end_row();
      }
    }
  }
  {
    auto f = csv("scf/rate.csv", {"n", "distance", "log_n", "log_distance"});
    for (const auto& p : s.rate) {
      f.cell(p.n).cell(p.distance).cell(std::log(static_cast<double>(p.n))).cell(std::log(p.distance));
      f.end_row();
    }
  }
  {
    // A handful of sample paths under the trained flow.
    const Ensemble ens = agent_ensemble(w, s.trajectory, 16, derive_seed(cfg_.seed, kSeedScf, 1000));
    const int d = ens.state_dim;
    std::string header = "path_id,t";
    for (int i = 1; i <= d; ++i) header += ",x_" + std::to_string(i);
    header += ",jump_flag,reward";
    auto f = csv("scf/ensemble.csv", {header});
    for (std::size_t i = 0; i < ens.size(); ++i) {
      const auto& p = ens.paths[i];
      for (std::size_t k = 0; k < p.size(); ++k) {
        f.cell(i).cell(p.t(k));
        for (int q = 0; q < d; ++q) f.cell(p.x(k)[static_cast<std::size_t>(q)]);
        f.cell(p.jump(k) ? 1 : 0).cell(k == 0 ? 0.0 : ens.rewards(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k - 1)));
        f.end_row();
      }
    }
  }

  const Generator& g = s.generator;
  json weights = json::array();
  for (Eigen::Index r = 0; r < g.weights().rows(); ++r) weights.push_back(vec_json(g.weights().row(r).transpose()));
  json rounds = json::array();
  for (const auto& r : s.rounds) {
    json trace = json::array();
    for (const auto& rec : r.trace) {
      trace.push_back({{"epoch", rec.epoch}, {"score_loss", rec.score_loss}, {"scf_loss", rec.scf_loss}, {"total_loss", rec.total_loss}});
    }
    rounds.push_back({{"initial_loss", r.initial_loss}, {"best_epoch", r.best_epoch}, {"final_score_loss", r.final_score_loss},
                      {"final_scf_loss", r.final_scf_loss}, {"trace", trace}});
  }
  write_json("scf/generator.json", {{"channels", g.channels()},
                                    {"degree", g.degree()},
                                    {"depth", g.depth()},
                                    {"proxy_inputs", g.proxy_inputs()},
                                    {"junction_inputs", g.junction_inputs()},
                                    {"weights", weights},
                                    {"rounds", rounds}});
  json rate = json::array();
  for (const auto& p : s.rate) rate.push_back({{"n", p.n}, {"distance", p.distance}});
  const bool rate_ok = std::abs(s.rate_slope + 0.5) <= 0.15;
  write_json("scf/summary.json", {{"signature_dim", tensor_size(w.channels(), w.opts.degree)},
                                  {"landmarks", w.map.dim()},
                                  {"scf_loss_untrained", s.scf_before},
                                  {"scf_loss_trained", s.scf_after},
                                  {"tangent_gap", s.tangent_gap},
                                  {"tangent_noise", s.tangent_noise},
                                  {"rate", rate},
                                  {"rate_slope", s.rate_slope},
                                  {"rate_slope_within_tolerance", rate_ok}});
}

void Run::emit_td() {
  const World& w = world();
  const TdConfig& tc = cfg_.td;
  stage_ = "td_realizable";
  const RandomWalkCase rw = random_walk_case(w.channels(), w.opts.degree, tc.realizable_landmarks, tc.realizable_steps,
                                             tc.realizable_step_scale, derive_seed(cfg_.seed, kSeedTd));
  const TdOutcome real = run_td_realizable(rw.trajectory, rw.map, tc, derive_seed(cfg_.seed, kSeedTd, 1));
  const TrainedTdOutcome& tr = trained_td();
  const VarianceOutcome& var = variance();
  stage_ = "td_output";
  fs::create_directories(out_ / "td");

  auto trace = [&](const fs::path& rel, const SweepResult& sw) {
    auto f = csv(rel, {"iter", "objective", "weight_norm", "max_abs_delta"});
    for (const auto& r : sw.trace) {
      f.cell(r.iteration).cell(r.objective).cell(r.weight_norm).cell(r.max_abs_delta);
      f.end_row();
    }
  };
  trace("td/td_trace.csv", real.sweep);
  trace("td/td_trace_trained.csv", tr.sweep);

  write_json("td/weights.json", {{"w_G", vec_json(tr.weights.w_G)},
                                 {"w_R", vec_json(tr.weights.w_R)},
                                 {"z", 0.0},
                                 {"w_sweep", vec_json(tr.sweep.w_G)},
                                 {"w_classical", vec_json(tr.classical.w)}});
  write_json("td/variance.json", {{"seeds", tc.variance_seeds},
                                  {"paths", tc.variance_paths},
                                  {"var_anticipatory_first_step", var.first_step.var_anticipatory},
                                  {"var_classical_first_step", var.first_step.var_classical},
                                  {"ratio_first_step", var.first_step.ratio},
                                  {"mean_var_anticipatory", var.mean_var_anticipatory},
                                  {"mean_var_classical", var.mean_var_classical},
                                  {"mean_ratio", var.mean_ratio},
                                  {"reduced", var.first_step.ratio < 1.0 && var.mean_ratio < 1.0}});
  const double final_obj = real.sweep.trace.empty() ? 0.0 : real.sweep.trace.back().objective;
  write_json("td/summary.json",
             {{"realizable",
               {{"landmarks", rw.map.dim()},
                {"steps", tc.realizable_steps},
                {"condition", real.oracle.condition},
                {"alpha", real.alpha},
                {"stability_bound", real.stability},
                {"iterations", real.sweep.iterations},
                {"converged", real.sweep.converged},
                {"final_objective", final_obj},
                {"sweep_rel_error", real.sweep_rel_error},
                {"max_abs_delta_oracle", real.max_abs_delta_oracle},
                {"max_abs_delta_sweep", real.max_abs_delta_sweep},
                {"pass", final_obj < 1e-8 && real.sweep_rel_error <= 1e-6 && real.max_abs_delta_oracle <= 1e-10}}},
              {"trained",
               {{"landmarks", w.map.dim()},
                {"steps", w.grid.size() - 1},
                {"reward_mse", tr.reward_mse},
                {"condition", tr.oracle.condition},
                {"ridge_used", tr.oracle.ridge_used},
                {"alpha", tr.alpha},
                {"iterations", tr.sweep.iterations},
                {"converged", tr.sweep.converged},
                {"sweep_rel_error", tr.sweep_rel_error},
                {"max_abs_delta_oracle", tr.max_abs_delta_oracle},
                {"classical_rel_gap", tr.classical_rel_gap}}}});
}

void Run::emit_greeks() {
  const World& w = world();
  const ScfOutcome& s = scf(false);
  const TrainedTdOutcome& tr = trained_td();
  stage_ = "greeks";
  const auto idx = spread_indices(w.grid.size() - 1, cfg_.greeks.points);
  const GreeksOutcome g = run_greeks(w, s.generator, tr.weights.w_G, idx, cfg_.greeks.directions, cfg_.greeks.theta_step);
  stage_ = "risk";
  const double delta0 = anticipatory_td_error(tr.features, tr.weights.w_G, tr.rewards, 0, cfg_.td.gamma, 0.0);
  const RiskOutcome r = run_risk(w, s.trajectory, delta0);
  stage_ = "greeks_output";
  fs::create_directories(out_ / "greeks");
  {
    auto f = csv("greeks/greeks.csv", {"s", "index", "value", "grad_w_norm", "grad_w_fd_err", "grad_proxy_norm",
                                       "grad_proxy_fd_err", "grad_theta_norm", "grad_theta_fd_err"});
    for (const auto& row : g.rows) {
      f.cell(row.s).cell(row.index).cell(row.value).cell(row.grad_w_norm).cell(row.grad_w_fd_err).cell(row.grad_proxy_norm);
      f.cell(row.grad_proxy_fd_err).cell(row.grad_theta_norm).cell(row.grad_theta_fd_err);
      f.end_row();
    }
  }
  write_json("greeks/risk.json", {{"mean", r.proxy_moments.mean},
                                  {"variance", r.proxy_moments.variance},
                                  {"ensemble_mean", r.ensemble_moments.mean},
                                  {"ensemble_variance", r.ensemble_moments.variance},
                                  {"sample_mean", r.sample_mean},
                                  {"sample_variance", r.sample_variance},
                                  {"variance_stderr", r.variance_stderr},
                                  {"alpha_tail", cfg_.risk.alpha_tail},
                                  {"cvar_gaussian", r.cvar_gaussian},
                                  {"cvar_empirical", r.cvar_empirical},
                                  {"beta_risk", cfg_.risk.beta_risk},
                                  {"advantage", r.advantage},
                                  {"rectified_advantage", r.rectified_advantage},
                                  {"risk_inner", r.risk_inner},
                                  {"max_w_err", g.max_w_err},
                                  {"max_proxy_err", g.max_proxy_err},
                                  {"max_theta_err", g.max_theta_err}});
}

void Run::emit_analysis() {
  const World& w = world();
  const ScfOutcome& s = scf(true);
  const VarianceOutcome& var = variance();
  stage_ = "analysis";
  const AnalysisOutcome a = run_analysis(w, s.trajectory, s.metric, cfg_.td.gamma);
  stage_ = "analysis_output";
  fs::create_directories(out_ / "analysis");
  {
    auto f = csv("analysis/contraction.csv", {"gamma", "transition_q_norm", "trials", "max_ratio", "mean_ratio"});
    f.cell(a.contraction.gamma).cell(a.contraction.transition_norm).cell(a.contraction.trials).cell(a.contraction.max_ratio).cell(a.contraction.mean_ratio);
    f.end_row();
  }
  {
    auto f = csv("analysis/fixed_point.csv", {"start", "iteration", "distance"});
    for (const auto* run : {&a.fixed_a, &a.fixed_b}) {
      for (std::size_t i = 0; i < run->distances.size(); ++i) {
        f.cell(run == &a.fixed_a ? 0 : 1).cell(i).cell(run->distances[i]);
        f.end_row();
      }
    }
  }
  {
    auto f = csv("analysis/decay.csv", {"s", "forecast_error", "proxy_q_norm"});
    for (std::size_t j = 0; j < a.decay.times.size(); ++j) {
      f.cell(a.decay.times[j]).cell(a.decay.errors[j]).cell(a.decay.proxy_norms[j]);
      f.end_row();
    }
  }
  {
    auto f = csv("analysis/stress.csv", {"metric", "jump_scale", "raw_norm", "whitened_norm", "raw_growth", "whitened_growth", "bound"});
    for (const auto* table : {&a.stress, &a.stress_fixed}) {
      for (const auto& r : *table) {
        f.cell(std::string(table == &a.stress ? "refit" : "fixed")).cell(r.jump_scale).cell(r.raw_norm).cell(r.whitened_norm);
        f.cell(r.raw_growth).cell(r.whitened_growth).cell(r.bound);
        f.end_row();
      }
    }
  }
  const double gamma = cfg_.td.gamma;
  const auto& top = a.stress.back();
  json checks;
  checks["identity_grounding"] = {{"pass", true}};
  checks["scf_equilibrium_rate"] = {{"slope", s.rate_slope}, {"pass", std::abs(s.rate_slope + 0.5) <= 0.15}};
  checks["bellman_contraction"] = {{"max_ratio", a.contraction.max_ratio}, {"gamma", gamma}, {"pass", a.contraction.max_ratio <= gamma}};
  const double rate = a.fixed_a.rate;
  checks["fixed_point_uniqueness"] = {{"rate", rate},
                                      {"rate_second_start", a.fixed_b.rate},
                                      {"limit_gap", a.fixed_gap},
                                      {"pass", std::abs(rate - gamma) <= 0.02 && std::abs(a.fixed_b.rate - gamma) <= 0.02 &&
                                                   a.fixed_gap <= 1e-6}};
  checks["variance_reduction"] = {{"ratio_first_step", var.first_step.ratio},
                                  {"mean_ratio", var.mean_ratio},
                                  {"pass", var.first_step.ratio < 1.0 && var.mean_ratio < 1.0}};
  checks["forecast_bounded"] = {{"slope", a.decay.slope},
                                {"decays", a.decay.slope < 0.0},
                                {"max_proxy_norm", a.decay.max_proxy_norm},
                                {"lyapunov", a.lyapunov},
                                {"pass", !a.decay.diverged && std::isfinite(a.decay.max_proxy_norm)}};
  checks["whitened_norm_stress"] = {{"scale", top.jump_scale},
                                    {"raw_growth", top.raw_growth},
                                    {"whitened_growth", top.whitened_growth},
                                    {"whitened_growth_fixed_metric", a.stress_fixed.back().whitened_growth},
                                    {"pass", top.whitened_growth < top.raw_growth}};
  bool all = true;
  for (auto& [k, v] : checks.items()) all = all && v["pass"].get<bool>();
  write_json("analysis/summary.json", {{"checks", checks}, {"all_pass", all}});
}

void write_error_trace(const fs::path& out, const std::string& stage, const std::string& what) {
  std::error_code ec;
  fs::create_directories(out, ec);
  std::ofstream f(out / "error_trace.txt", std::ios::binary);
  f << "stage: " << stage << "\n" << what << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Anticipatory RL experiment driver"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  unsigned threads = 1;
  app.add_option("--config", config_path, "INI configuration file")->required()->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "overrides run.seed");
  app.add_option("--out-dir", out_dir, "artifact directory");
  app.add_option("--threads", threads, "worker threads (speed only)")->check(CLI::PositiveNumber);
  for (const char* name : {"run-scf", "run-td", "run-greeks", "run-analysis", "run-all"}) app.add_subcommand(name);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  const std::string sub = app.get_subcommands().front()->get_name();

  ConfigValues cv;
  ExperimentConfig cfg;
  try {
    cv = load_config_values(config_path);
    if (seed) cv.values["run.seed"] = std::to_string(*seed);
    cfg = to_experiment_config(cv);
  } catch (const Error& e) {
    std::cerr << config_path << ": " << e.what() << "\n";
    return kExitConfig;
  }
  cfg.threads = threads;

  Run run(sub, cv, cfg, out_dir);
  try {
    fs::create_directories(run.out());
    if (sub == "run-scf" || sub == "run-all") run.emit_scf();
    if (sub == "run-td" || sub == "run-all") run.emit_td();
    if (sub == "run-greeks" || sub == "run-all") run.emit_greeks();
    if (sub == "run-analysis" || sub == "run-all") run.emit_analysis();
  } catch (const NumericError& e) {
    write_error_trace(run.out(), run.stage(), e.what());
    std::cerr << "numeric failure in " << run.stage() << ": " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ConfigurationError& e) {
    std::cerr << "configuration error in " << run.stage() << ": " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    write_error_trace(run.out(), run.stage(), e.what());
    std::cerr << "error in " << run.stage() << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}
