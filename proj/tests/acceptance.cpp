// Acceptance suite: one PASS/FAIL line per criterion, tolerances and runtime
// budgets fixed below.  Exit status is the number of failed criteria.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>

#include "arl/experiments.hpp"
#include "helpers.hpp"

using namespace arl;
namespace fs = std::filesystem;

namespace {

constexpr unsigned kThreads = 1;

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, double budget_s, const std::function<Verdict()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = budget_s <= 0.0 || secs < budget_s;
  const bool ok = v.pass && in_time;
  if (!ok) ++failures;
  char timing[96];
  if (budget_s > 0.0) {
    std::snprintf(timing, sizeof timing, "%.1f s (budget %.0f s%s)", secs, budget_s, in_time ? "" : ", EXCEEDED");
  } else {
    std::snprintf(timing, sizeof timing, "%.1f s", secs);
  }
  std::printf("[%s] %2d %-26s %s | %s\n", ok ? "PASS" : "FAIL", id, name.c_str(), v.detail.c_str(), timing);
  std::fflush(stdout);
}

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

double rel_err(const TruncTensor& a, const TruncTensor& b) {
  double scale = 1.0;
  for (double x : b.flat()) scale = std::max(scale, std::abs(x));
  return max_abs_diff(a, b) / scale;
}

// Jump-diffusion scenario shared by the statistical criteria: one asset with
// Poisson jumps, the reward channel appended, no memory coupling.
ExperimentConfig levy_config() {
  ExperimentConfig cfg;
  AnjdParams& p = cfg.env.params;
  p = AnjdParams::quiet(1);
  p.drift_base << 0.05;
  p.vol(0, 0) = 0.2;
  p.jump_intensity = 3.0;
  p.jump_mean << -0.05;
  p.jump_scale << 0.05;
  p.action_exposure << 1.0;
  p.reward_loadings << 1.0;
  cfg.env.x0 = Vector::Zero(1);
  cfg.env.steps = 50;
  cfg.env.burn_in_steps = 50;
  cfg.kernel.degree = 4;
  cfg.kernel.landmarks = 64;
  cfg.kernel.pilot_paths = 256;
  cfg.scf.train_paths = 32768;
  cfg.scf.rounds = 1;
  cfg.scf.depth = 4;
  cfg.scf.proxy_inputs = 0;
  cfg.scf.junction_inputs = 0;
  cfg.scf.trainer.epochs = 5;
  cfg.scf.rate_sizes = {64, 256, 1024, 4096};
  cfg.scf.rate_repeats = 16;
  cfg.td.variance_seeds = 100;
  cfg.td.variance_paths = 512;
  cfg.risk.paths = 4096;
  cfg.seed = 20240601;
  cfg.threads = kThreads;
  return cfg;
}

struct Shared {
  World world;
  ScfOutcome scf;
  std::optional<TrainedTdOutcome> td;
};

bool same_tree(const fs::path& a, const fs::path& b, std::string& why, std::size_t& files) {
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    ++files;
    const fs::path other = b / fs::relative(e.path(), a);
    if (!fs::exists(other) || slurp(e.path()) != slurp(other)) {
      why = fs::relative(e.path(), a).string();
      return false;
    }
  }
  std::size_t count_b = 0;
  for (const auto& e : fs::recursive_directory_iterator(b)) count_b += e.is_regular_file() ? 1 : 0;
  if (count_b != files) {
    why = "file counts differ";
    return false;
  }
  return true;
}

}  // namespace

int main() {
  std::printf("acceptance suite (threads=%u)\n", kThreads);

  report(1, "algebra exactness", 10.0, [] {
    StreamRng rng(101, 0);
    double chen = 0.0, inverse = 0.0, roundtrip = 0.0;
    SignatureOptions opts;
    opts.degree = 4;
    for (int i = 0; i < 1000; ++i) {
      const CadlagPath path = arl::testing::random_path(3, 12, rng);
      const double split = path.t(1 + static_cast<std::size_t>(rng.uniform() * 10.0));
      const TruncTensor whole = path_signature(path, opts);
      const TruncTensor parts = trunc_product(path_signature(path, path.start_time(), split, opts),
                                              path_signature(path, split, path.end_time(), opts));
      chen = std::max(chen, rel_err(parts, whole));

      const TruncTensor g = arl::testing::random_group(5, 4, 0.5, rng);
      const TruncTensor e = identity(5, 4);
      inverse = std::max({inverse, max_abs_diff(trunc_product(g, group_inverse(g)), e),
                          max_abs_diff(trunc_product(group_inverse(g), g), e)});

      const TruncTensor x = arl::testing::random_lie(5, 4, 0.5, rng);
      roundtrip = std::max({roundtrip, rel_err(trunc_log(trunc_exp(x)), x), rel_err(trunc_exp(trunc_log(g)), g)});
    }
    const std::size_t dims = tensor_size(5, 4);
    const bool ok = chen <= 1e-12 && inverse <= 1e-12 && roundtrip <= 1e-12 && dims == 781;
    return Verdict{ok, "chen=" + fmt("%.2e", chen) + " inverse=" + fmt("%.2e", inverse) +
                           " exp/log=" + fmt("%.2e", roundtrip) + " dim(5,4)=" + std::to_string(dims) +
                           " (tol 1e-12, 781)"};
  });

  report(2, "filtering equivalence", 30.0, [] {
    StreamRng rng(202, 0);
    double worst = 0.0;
    SignatureOptions opts;
    opts.degree = 4;
    for (int i = 0; i < 200; ++i) {
      const CadlagPath path = arl::testing::random_path(3, 40, rng, 0.25);
      worst = std::max(worst, rel_err(filter_path(path, opts).sig, path_signature(path, opts)));
    }
    return Verdict{worst <= 1e-10, "max rel err " + fmt("%.2e", worst) + " over 200 paths (tol 1e-10)"};
  });

  report(3, "nested residual identity", 0.0, [] {
    StreamRng rng(303, 0);
    std::vector<TruncTensor> lm;
    for (int i = 0; i < 32; ++i) lm.push_back(trunc_exp(arl::testing::random_lie(4, 4, 0.4, rng)));
    const NystromMap map = build_nystrom(lm, 1e-6, unit_level_weights(4));
    std::vector<double> grid;
    for (int j = 0; j <= 40; ++j) grid.push_back(j / 40.0);
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
      Generator gen(4, 4, 3, 2, 0);
      for (Eigen::Index i = 0; i < gen.weights().size(); ++i) gen.weights().data()[i] = 0.3 * rng.normal();
      const ProxyTrajectory traj = integrate_flow(gen, Vector(), grid, &map);
      // Residual built forward from the flow's own step exponentials.
      std::vector<TruncTensor> steps;
      for (std::size_t j = 0; j + 1 < grid.size(); ++j) {
        const Vector h = map.compress_head(traj.elements[j], 2);
        steps.push_back(trunc_exp(gen(phase_of(grid, j), h, Vector()) * (grid[j + 1] - grid[j])));
      }
      TruncTensor psi = identity(4, 4);
      for (std::size_t j = grid.size(); j-- > 0;) {
        if (j + 1 < grid.size()) psi = trunc_product(steps[j], psi);
        worst = std::max({worst, rel_err(trunc_product(traj.elements[j], psi), traj.terminal()),
                          rel_err(trunc_product(traj.elements[j], nested_residual(traj, j)), traj.terminal())});
      }
    }
    return Verdict{worst <= 1e-12, "max rel err " + fmt("%.2e", worst) + " over 50 trajectories x 41 points (tol 1e-12)"};
  });

  Shared shared;
  report(4, "scf equilibrium rate", 300.0, [&] {
    shared.world = build_world(levy_config());
    shared.scf = run_scf(shared.world, true);
    std::string pts;
    for (const auto& r : shared.scf.rate) pts += " n=" + std::to_string(r.n) + ":" + fmt("%.3e", r.distance);
    const double slope = shared.scf.rate_slope;
    const double first = shared.scf.rounds.back().trace.front().total_loss;
    const double best = shared.scf.rounds.back().trace[static_cast<std::size_t>(shared.scf.rounds.back().best_epoch)].total_loss;
    return Verdict{std::abs(slope + 0.5) <= 0.15,
                   "slope " + fmt("%.3f", slope) + " (target -0.5 +- 0.15);" + pts + "; loss " + fmt("%.3e", first) +
                       " -> " + fmt("%.3e", best)};
  });

  report(5, "td fixed point", 60.0, [] {
    const RandomWalkCase rw = random_walk_case(3, 4, 8, 50, 0.3, 505);
    TdConfig tc;
    tc.gamma = 0.99;
    tc.alpha = 0.0;
    tc.max_iterations = 200000;
    tc.tolerance = 1e-13;
    TdOutcome out = run_td_realizable(rw.trajectory, rw.map, tc, 506);
    const double at_true =
        anticipatory_td_errors(out.features, out.w_true, out.rewards, tc.gamma, out.z).cwiseAbs().maxCoeff();
    const bool ok = out.sweep_rel_error <= 1e-6 && out.max_abs_delta_oracle <= 1e-10 && at_true <= 1e-10;
    return Verdict{ok, "sweep vs A^-1 b rel " + fmt("%.2e", out.sweep_rel_error) + " (tol 1e-6); max|delta| at w* " +
                           fmt("%.2e", out.max_abs_delta_oracle) + ", at planted w " + fmt("%.2e", at_true) +
                           " (tol 1e-10); " + std::to_string(out.sweep.iterations) + " sweeps"};
  });

  report(6, "variance reduction", 600.0, [&] {
    shared.td = run_td_trained(shared.world, shared.scf.trajectory);
    const ExperimentConfig& c = shared.world.cfg;
    const VarianceOutcome v = run_variance(shared.world, shared.td->weights, c.td.variance_seeds, c.td.variance_paths, c.td.gamma);
    const bool ok = v.first_step.ratio < 1.0 && v.mean_ratio < 1.0;
    return Verdict{ok, "Var ratio at junction " + fmt("%.4f", v.first_step.ratio) + ", mean over steps " +
                           fmt("%.4f", v.mean_ratio) + " (must be < 1; 100 seeds, N=512)"};
  });

  report(7, "greeks vs finite diff", 120.0, [&] {
    const World& w = shared.world;
    const auto idx = spread_indices(w.cfg.env.steps, 3);
    const GreeksOutcome a = run_greeks(w, shared.scf.generator, shared.td->weights.w_G, idx, 10, 1e-5);
    // Same check with a generator that also reads the compressed proxy.
    const Generator& trained = shared.scf.generator;
    Generator reads(trained.channels(), trained.degree(), trained.depth(), 2, 0);
    reads.weights().leftCols(2) = trained.weights().leftCols(2);
    StreamRng rng(707, 0);
    for (Eigen::Index r = 0; r < reads.weights().rows(); ++r) {
      for (Eigen::Index k = 2; k < 4; ++k) reads.weights()(r, k) = 0.01 * rng.normal();
    }
    const GreeksOutcome b = run_greeks(w, reads, shared.td->weights.w_G, idx, 10, 1e-5);
    const double ew = std::max(a.max_w_err, b.max_w_err);
    const double ep = std::max(a.max_proxy_err, b.max_proxy_err);
    const double et = std::max(a.max_theta_err, b.max_theta_err);
    const bool ok = ew <= 1e-6 && ep <= 1e-6 && et <= 1e-4;
    return Verdict{ok, "rel err w " + fmt("%.2e", ew) + ", proxy " + fmt("%.2e", ep) + " (tol 1e-6); theta " +
                           fmt("%.2e", et) + " (tol 1e-4)"};
  });

  report(8, "bellman contraction", 120.0, [&] {
    const World& w = shared.world;
    const AvnsgMetric& q = shared.scf.metric;
    const double gamma = 0.99;
    BellmanOperator op;
    op.gamma = gamma;
    op.transition = random_q_nonexpansive(q, 1.0, 808);
    op.offset = w.map.compress(shared.scf.trajectory.terminal()) * (1.0 - gamma);
    op.reward = return_moments(shared.scf.trajectory.terminal(), w.reward_channel_index()).mean;
    const ContractionReport rep = contraction_check(op, q, 1000, 809);
    auto apply = [&op](const LawEncoding& e) { return op(e); };
    const FixedPointRun run = fixed_point_iterate(apply, LawEncoding{0.0, Vector::Zero(q.dim())}, q, 1e-10);
    const bool ok = rep.trials == 1000 && rep.max_ratio <= gamma && std::abs(run.rate - gamma) <= 0.02;
    return Verdict{ok, "max ratio " + fmt("%.6f", rep.max_ratio) + " (<= 0.99 over 1000 pairs); iteration rate " +
                           fmt("%.5f", run.rate) + " (0.99 +- 0.02)"};
  });

  report(9, "whitened-norm stress", 120.0, [&] {
    const World& w = shared.world;
    const std::vector<double> scales{1.0, 10.0};
    std::vector<std::vector<TruncTensor>> proxies;
    std::vector<AvnsgMetric> metrics;
    for (double s : scales) {
      World ws = w;
      ws.cfg.env.params.jump_mean *= s;
      ws.cfg.env.params.jump_scale *= s;
      const Ensemble e = generate_ensemble(base_spec(ws, 1024, 909));
      SignatureStatistics st = signature_statistics(e, w.opts, true, kThreads);
      metrics.push_back(fit_relative_metric(st.terminal, w.map, w.cfg.kernel.metric_lambda_rel));
      proxies.push_back(std::move(st.terminal));
    }
    const auto refit = whitened_norm_stress(scales, proxies, w.map, metrics, 1.0);
    const auto fixed = whitened_norm_stress(scales, proxies, w.map, {metrics.front()}, 1.0);
    const StressRow& r = refit.back();
    return Verdict{r.whitened_growth < r.raw_growth,
                   "x10 jumps: raw growth " + fmt("%.3f", r.raw_growth) + ", whitened growth " +
                       fmt("%.3f", r.whitened_growth) + " (must be below raw; with x1 metric held fixed " +
                       fmt("%.3f", fixed.back().whitened_growth) + ")"};
  });

  report(10, "moment / risk consistency", 0.0, [&] {
    // Variance implied by the trained flow against an independent ensemble.
    const World& w = shared.world;
    const int rc = w.reward_channel_index();
    const ReturnMoments pm = return_moments(shared.scf.trajectory.terminal(), rc);
    const Ensemble ens = generate_ensemble(base_spec(w, 4096, 1010));
    const Vector ret = path_returns(ens);
    const std::vector<double> rets(ret.data(), ret.data() + ret.size());
    const double sv = sample_variance(rets);
    const double se = variance_standard_error(rets);
    const bool var_ok = std::abs(pm.variance - sv) <= 3.0 * se;

    // Gaussian ensemble: closed-form CVaR from one ensemble's mean-signature
    // moments against the empirical tail mean of an independent ensemble.
    ExperimentConfig gc = levy_config();
    gc.env.params.jump_intensity = 0.0;
    gc.env.steps = 20;
    gc.env.burn_in_steps = 0;
    gc.kernel.degree = 2;
    gc.kernel.landmarks = 8;
    gc.kernel.pilot_paths = 16;
    const World g = build_world(gc);
    const Ensemble a = generate_ensemble(base_spec(g, 100000, 1011));
    const Ensemble b = generate_ensemble(base_spec(g, 100000, 1012));
    const ReturnMoments gm = return_moments(empirical_mean_signature(a, 0.0, 1.0, g.opts, kThreads), g.reward_channel_index());
    const double closed = cvar(gm.mean, gm.variance, 0.05);
    const Vector rb = path_returns(b);
    const double empirical = empirical_cvar(std::vector<double>(rb.data(), rb.data() + rb.size()), 0.05);
    const double rel = std::abs(closed - empirical) / std::abs(empirical);
    const bool cvar_ok = rel <= 0.01;
    return Verdict{var_ok && cvar_ok, "variance proxy " + fmt("%.5f", pm.variance) + " vs sample " + fmt("%.5f", sv) +
                                          " (|diff| " + fmt("%.5f", std::abs(pm.variance - sv)) + " <= 3 se " +
                                          fmt("%.5f", 3.0 * se) + "); gaussian CVaR5% " + fmt("%.4f", closed) +
                                          " vs tail mean " + fmt("%.4f", empirical) + " (rel " + fmt("%.4f", rel) +
                                          " <= 0.01)"};
  });

  report(11, "reproducibility", 0.0, [] {
    const fs::path root = fs::temp_directory_path() / "arl_acceptance_repro";
    fs::remove_all(root);
    const std::string cli = ARL_CLI_PATH;
    const std::string cfg = std::string(ARL_SOURCE_DIR) + "/configs/smoke.ini";
    auto run = [&](const std::string& dir, int threads) {
      const std::string cmd = "\"" + cli + "\" --config \"" + cfg + "\" --out-dir \"" + (root / dir).string() +
                              "\" --threads " + std::to_string(threads) + " run-all > /dev/null 2>&1";
      return std::system(cmd.c_str()) == 0;
    };
    if (!run("a", 1) || !run("b", 1) || !run("c", 2)) return Verdict{false, "run-all failed"};
    std::string why;
    std::size_t files = 0;
    const bool ab = same_tree(root / "a", root / "b", why, files);
    const bool ac = ab && same_tree(root / "a", root / "c", why, files);
    return Verdict{ab && ac, ab && ac ? std::to_string(files) + " artifacts byte-identical across 3 runs (threads 1, 1, 2)"
                                      : "mismatch: " + why};
  });

  std::printf("%d of 11 criteria failed\n", failures);
  return failures;
}
