#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "reachsec/codesign.hpp"
#include "reachsec/config.hpp"
#include "reachsec/envelope.hpp"
#include "reachsec/performance.hpp"
#include "reachsec/reachability.hpp"
#include "reachsec/version.hpp"

namespace {

using reachsec::json;

struct CommonOpts {
  std::string config_path;
  std::string out_path = "-";
  std::string gains_path;
  std::optional<std::uint64_t> seed_override;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool with_gains = true) {
  cmd->add_option("config", opts.config_path, "configuration file (JSON)")->required();
  cmd->add_option("--out", opts.out_path, "envelope output path, '-' for stdout");
  if (with_gains)
    cmd->add_option("--gains", opts.gains_path,
                    "JSON file with matrices L and K (overrides config gains)");
  cmd->add_option("--seed", opts.seed_override, "override the solver seed");
}

reachsec::RunConfig load(const CommonOpts& opts) {
  auto cfg = reachsec::load_config(opts.config_path);
  if (!opts.gains_path.empty())
    cfg.gains = reachsec::load_gains_file(opts.gains_path, cfg.model);
  if (opts.seed_override) cfg.solver.seed = *opts.seed_override;
  return cfg;
}

const reachsec::GainPair& require_gains(const reachsec::RunConfig& cfg, const char* cmd) {
  if (!cfg.gains) {
    throw std::invalid_argument(std::string(cmd) +
                                ": gains required (config 'gains' section or --gains file)");
  }
  return *cfg.gains;
}

int resolve_k_star(const reachsec::RunConfig& cfg, const reachsec::GainPair* gains) {
  if (cfg.horizon.mode == reachsec::HorizonPolicy::Mode::Fixed) return cfg.horizon.fixed_k;
  const reachsec::GainPair g = gains ? *gains : reachsec::GainPair::zero(cfg.model);
  return reachsec::settling_horizon(cfg.model, g, cfg.horizon.eps);
}

void emit(const std::string& out_path, const json& envelope) {
  const std::string text = envelope.dump(2) + "\n";
  if (out_path == "-") {
    std::cout << text;
  } else {
    std::ofstream out(out_path);
    if (!out) throw std::invalid_argument("cannot open '" + out_path + "' for writing");
    out << text;
  }
}

json tradeoff_point_json(const reachsec::TradeoffPoint& pt) {
  using reachsec::round_sig12;
  json j;
  j["gamma_bar"] = round_sig12(pt.gamma_bar);
  j["occ_gamma"] = round_sig12(pt.occ_gamma);
  j["L"] = reachsec::json_matrix(pt.gains.L);
  j["K"] = reachsec::json_matrix(pt.gains.K);
  j["lambda"] = round_sig12(pt.lambda);
  j["sqrt_trace_qstar"] = round_sig12(pt.sqrt_trace_qstar);
  j["attack_objective"] = round_sig12(pt.attack_objective);
  j["residual_norm"] = round_sig12(pt.residual_norm);
  return j;
}

std::vector<std::string> gain_column_names(const reachsec::PlantModel& m) {
  std::vector<std::string> names;
  for (Eigen::Index i = 0; i < m.n(); ++i)
    for (Eigen::Index j = 0; j < m.p(); ++j)
      names.push_back("L_" + std::to_string(i) + "_" + std::to_string(j));
  for (Eigen::Index u = 0; u < m.m(); ++u)
    for (Eigen::Index v = 0; v < m.n(); ++v)
      names.push_back("K_" + std::to_string(u) + "_" + std::to_string(v));
  return names;
}

int run_analyze(const CommonOpts& opts) {
  auto cfg = load(opts);
  const auto& gains = require_gains(cfg, "analyze");
  const int k_star = resolve_k_star(cfg, &gains);
  const auto occ = reachsec::occ_gain(cfg.model, gains);
  const auto rc = reachsec::residual_covariance(cfg.model, gains.L);
  const auto terms =
      reachsec::shape_term_sequences(cfg.model, gains, cfg.detector, cfg.truncation, k_star);
  const auto summary = reachsec::summarize(terms);
  const auto st = reachsec::check_gains(cfg.model, gains);

  json payload;
  payload["gamma"] = reachsec::round_sig12(occ.gamma);
  payload["gamma0"] = reachsec::round_sig12(reachsec::open_loop_gain(cfg.model));
  payload["k_star"] = k_star;
  payload["P_e"] = reachsec::json_matrix(rc.P_e);
  payload["Sigma"] = reachsec::json_matrix(rc.Sigma);
  payload["sqrt_trace_qstar"] = reachsec::round_sig12(summary.sqrt_trace_total);
  payload["attack_objective"] = reachsec::round_sig12(summary.attack_objective);
  payload["noise_only_sqrt_trace"] = reachsec::round_sig12(summary.noise_only_trace);
  payload["rho_control"] = reachsec::round_sig12(st.rho_control);
  payload["rho_observer"] = reachsec::round_sig12(st.rho_observer);
  emit(opts.out_path, reachsec::make_envelope("analyze", cfg, cfg.model_diag.warnings,
                                              std::move(payload)));
  return 0;
}

int run_gamma_bounds(const CommonOpts& opts) {
  auto cfg = load(opts);
  const int k_star = resolve_k_star(cfg, nullptr);
  const double gamma0 = reachsec::open_loop_gain(cfg.model);
  const auto res = reachsec::min_occ_gain(cfg.model, cfg.solver, k_star);

  json payload;
  payload["gamma0"] = reachsec::round_sig12(gamma0);
  payload["gamma_star"] = reachsec::round_sig12(res.gamma_star);
  payload["L"] = reachsec::json_matrix(res.gains.L);
  payload["K"] = reachsec::json_matrix(res.gains.K);
  payload["residual_norm"] = reachsec::round_sig12(res.residual_norm);
  payload["converged_starts"] = res.converged_starts;
  payload["k_star"] = k_star;
  emit(opts.out_path, reachsec::make_envelope("gamma-bounds", cfg, cfg.model_diag.warnings,
                                              std::move(payload)));
  return 0;
}

int run_design(const CommonOpts& opts, double gamma_bar) {
  auto cfg = load(opts);
  const int k_star = resolve_k_star(cfg, nullptr);
  reachsec::DesignProblem prob{cfg.model, cfg.detector, cfg.truncation, gamma_bar, k_star,
                               cfg.solver};
  const auto pt = reachsec::design_gains(prob);
  json payload = tradeoff_point_json(pt);
  payload["k_star"] = k_star;
  emit(opts.out_path,
       reachsec::make_envelope("design", cfg, cfg.model_diag.warnings, std::move(payload)));
  return 0;
}

int run_sweep(const CommonOpts& opts, double from, double to, int steps,
              const std::string& csv_path) {
  auto cfg = load(opts);
  const int k_star = resolve_k_star(cfg, nullptr);
  const auto outcome = reachsec::tradeoff_sweep(cfg.model, cfg.detector, cfg.truncation, from,
                                                to, steps, k_star, cfg.solver);

  reachsec::CsvWriter csv(csv_path);
  std::vector<std::string> cols = {"gamma_bar", "sqrt_trace_qstar", "attack_objective",
                                   "lambda", "residual"};
  for (const auto& name : gain_column_names(cfg.model)) cols.push_back(name);
  csv.header(cols);
  for (const auto& pt : outcome.points) {
    std::vector<double> row = {pt.gamma_bar, pt.sqrt_trace_qstar, pt.attack_objective,
                               pt.lambda, pt.residual_norm};
    for (Eigen::Index i = 0; i < pt.gains.L.rows(); ++i)
      for (Eigen::Index j = 0; j < pt.gains.L.cols(); ++j) row.push_back(pt.gains.L(i, j));
    for (Eigen::Index u = 0; u < pt.gains.K.rows(); ++u)
      for (Eigen::Index v = 0; v < pt.gains.K.cols(); ++v) row.push_back(pt.gains.K(u, v));
    csv.row(row);
  }

  json payload;
  payload["k_star"] = k_star;
  payload["csv"] = csv_path;
  json pts = json::array();
  for (const auto& pt : outcome.points) pts.push_back(tradeoff_point_json(pt));
  payload["points"] = std::move(pts);
  json fails = json::array();
  for (const auto& f : outcome.failures)
    fails.push_back({{"gamma_bar", reachsec::round_sig12(f.gamma_bar)}, {"error", f.message}});
  payload["failures"] = std::move(fails);
  emit(opts.out_path,
       reachsec::make_envelope("sweep", cfg, cfg.model_diag.warnings, std::move(payload)));
  return 0;
}

int run_boundary(const CommonOpts& opts, std::optional<int> k_opt, int directions,
                 const std::string& csv_path) {
  auto cfg = load(opts);
  const auto& gains = require_gains(cfg, "boundary");
  const int k_star = k_opt ? *k_opt : resolve_k_star(cfg, &gains);
  const auto terms =
      reachsec::shape_term_sequences(cfg.model, gains, cfg.detector, cfg.truncation, k_star);
  const auto summary = reachsec::summarize(terms);
  const int n = static_cast<int>(cfg.model.n());
  const auto dirs = reachsec::direction_grid(n, directions, cfg.solver.seed);
  const auto pts = reachsec::exact_reachable_boundary(terms, dirs);

  reachsec::CsvWriter csv(csv_path);
  std::vector<std::string> cols;
  if (n == 2) cols.push_back("ell_angle");
  for (int i = 0; i < n; ++i) cols.push_back("ell_" + std::to_string(i));
  for (int i = 0; i < n; ++i) cols.push_back("x_" + std::to_string(i));
  csv.header(cols);
  for (std::size_t d = 0; d < dirs.size(); ++d) {
    std::vector<double> row;
    if (n == 2) row.push_back(2.0 * M_PI * d / dirs.size());
    for (int i = 0; i < n; ++i) row.push_back(dirs[d].ell(i));
    for (int i = 0; i < n; ++i) row.push_back(pts[d](i));
    csv.row(row);
  }

  json payload;
  payload["k_star"] = k_star;
  payload["directions"] = directions;
  payload["csv"] = csv_path;
  payload["qstar_shape"] = reachsec::json_matrix(summary.q_star.shape);
  payload["qstar_center"] = reachsec::json_vector(summary.q_star.center);
  payload["sqrt_trace_qstar"] = reachsec::round_sig12(summary.sqrt_trace_total);
  emit(opts.out_path,
       reachsec::make_envelope("boundary", cfg, cfg.model_diag.warnings, std::move(payload)));
  return 0;
}

int run_simulate(const CommonOpts& opts, long trials, std::optional<int> k_opt) {
  auto cfg = load(opts);
  const auto& gains = require_gains(cfg, "simulate");
  const int k_star = k_opt ? *k_opt : resolve_k_star(cfg, &gains);
  const auto rep = reachsec::simulate_attacked_trajectories(
      cfg.model, gains, cfg.detector, cfg.truncation, trials, k_star, cfg.solver.seed);

  json payload;
  payload["trials"] = rep.trials;
  payload["steps"] = rep.steps;
  payload["seed"] = cfg.solver.seed;
  payload["contained_fraction"] = reachsec::round_sig12(rep.contained_fraction);
  payload["violations"] = rep.violations;
  payload["max_quadratic_form"] = reachsec::round_sig12(rep.max_quadratic_form);
  emit(opts.out_path,
       reachsec::make_envelope("simulate", cfg, cfg.model_diag.warnings, std::move(payload)));
  return 0;
}

int run_check_trivial(const CommonOpts& opts) {
  auto cfg = load(opts);
  const Eigen::MatrixXd* k = cfg.gains ? &cfg.gains->K : nullptr;
  const auto d = reachsec::trivial_solution_check(cfg.model, k);

  json payload;
  payload["generic_solutions"] = "L = 0 or K = 0 always zero the attack impact";
  payload["rank_G"] = d.rank_G;
  payload["k_forced_zero"] = d.k_forced_zero;
  payload["nonzero_k_family"] = d.nonzero_k_family;
  payload["null_F_dim"] = d.null_F_dim;
  payload["nonzero_l_family"] = d.nonzero_l_family;
  payload["generic_only"] = d.generic_only;
  if (d.nonzero_l_family)
    payload["verification_residual"] = reachsec::round_sig12(d.verification_residual);
  if (d.supplied_k_common_null_dim >= 0)
    payload["supplied_k_common_null_dim"] = d.supplied_k_common_null_dim;
  emit(opts.out_path, reachsec::make_envelope("check-trivial", cfg, cfg.model_diag.warnings,
                                              std::move(payload)));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ellipsoidal reachability bounds and observer/controller co-design for "
               "LTI systems under stealthy sensor attacks"};
  app.set_version_flag("--version", std::string(reachsec::kArtifactVersion));
  app.require_subcommand(1);

  CommonOpts analyze_opts, bounds_opts, design_opts, sweep_opts, boundary_opts, sim_opts,
      trivial_opts;
  double gamma_bar = 0.0;
  double sweep_from = 0.0, sweep_to = 0.0;
  int sweep_steps = 12;
  std::string sweep_csv = "sweep.csv", boundary_csv = "boundary.csv";
  std::optional<int> k_opt_boundary, k_opt_sim;
  int directions = 720;
  long trials = 10000;

  auto* c_analyze = app.add_subcommand("analyze", "closed-loop metrics at given gains");
  add_common(c_analyze, analyze_opts);

  auto* c_bounds =
      app.add_subcommand("gamma-bounds", "open-loop gain gamma0 and minimum gain gamma*");
  add_common(c_bounds, bounds_opts, /*with_gains=*/false);

  auto* c_design = app.add_subcommand("design", "minimize attack impact at a target OCC gain");
  add_common(c_design, design_opts, /*with_gains=*/false);
  c_design->add_option("--gamma-bar", gamma_bar, "target OCC gain in [gamma*, gamma0]")
      ->required();

  auto* c_sweep = app.add_subcommand("sweep", "trace the performance-security curve");
  add_common(c_sweep, sweep_opts, /*with_gains=*/false);
  c_sweep->add_option("--from", sweep_from, "lower gamma_bar")->required();
  c_sweep->add_option("--to", sweep_to, "upper gamma_bar")->required();
  c_sweep->add_option("--steps", sweep_steps, "number of grid points");
  c_sweep->add_option("--csv", sweep_csv, "curve CSV output path");

  auto* c_boundary = app.add_subcommand("boundary", "exact reachable-set boundary points");
  add_common(c_boundary, boundary_opts);
  c_boundary->add_option("--k", k_opt_boundary, "horizon (default: horizon policy)");
  c_boundary->add_option("--directions", directions, "number of support directions");
  c_boundary->add_option("--csv", boundary_csv, "boundary CSV output path");

  auto* c_sim = app.add_subcommand("simulate", "Monte-Carlo zero-alarm attack containment");
  add_common(c_sim, sim_opts);
  c_sim->add_option("--trials", trials, "number of trajectories");
  c_sim->add_option("--k", k_opt_sim, "horizon (default: horizon policy)");

  auto* c_trivial = app.add_subcommand("check-trivial", "diagnose trivial gain families");
  add_common(c_trivial, trivial_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (c_analyze->parsed()) return run_analyze(analyze_opts);
    if (c_bounds->parsed()) return run_gamma_bounds(bounds_opts);
    if (c_design->parsed()) return run_design(design_opts, gamma_bar);
    if (c_sweep->parsed()) return run_sweep(sweep_opts, sweep_from, sweep_to, sweep_steps, sweep_csv);
    if (c_boundary->parsed())
      return run_boundary(boundary_opts, k_opt_boundary, directions, boundary_csv);
    if (c_sim->parsed()) return run_simulate(sim_opts, trials, k_opt_sim);
    if (c_trivial->parsed()) return run_check_trivial(trivial_opts);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const reachsec::numerical_error& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
