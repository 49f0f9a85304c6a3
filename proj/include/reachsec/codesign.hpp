#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "reachsec/linalg.hpp"
#include "reachsec/model.hpp"
#include "reachsec/newton.hpp"
#include "reachsec/parallel.hpp"
#include "reachsec/performance.hpp"
#include "reachsec/reachability.hpp"

namespace reachsec {

struct DesignProblem {
  PlantModel model;
  DetectorConfig detector;
  NoiseTruncation truncation;
  double gamma_bar = 0.0;
  int k_star = 35;
  SolverConfig solver;
};

struct TradeoffPoint {
  double gamma_bar = 0.0;
  GainPair gains;
  double lambda = 0.0;
  double sqrt_trace_qstar = 0.0;
  double attack_objective = 0.0;
  double residual_norm = 0.0;
  double occ_gamma = 0.0;
};

namespace detail {

/// Shared per-point evaluation state for the Lagrangian system
/// Omega = J + lambda C: truncated covariance, truncated Sigma, the H_q
/// family and its q-term traces with the degenerate-term skip rule.
struct DesignEval {
  ClosedLoopRealization cl;
  Eigen::MatrixXd p_trunc;
  Eigen::MatrixXd sigma_trunc;
  Eigen::MatrixXd lsl;  // L Sigma_trunc L'
  std::vector<Eigen::MatrixXd> h;
  std::vector<Eigen::MatrixXd> fgk_pow;
  std::vector<double> term_trace;  // tr(H_q L Sigma L' H_q')
  std::vector<bool> keep;
  double c_trunc = 0.0;  // truncated constraint value
  int k_star = 0;
};

inline DesignEval design_eval(const PlantModel& m, const GainPair& g, double gamma_bar,
                              int k_star) {
  DesignEval ev;
  ev.k_star = k_star;
  ev.cl = assemble_closed_loop(m, g);
  ev.p_trunc = truncated_steady_covariance(ev.cl.A, ev.cl.R, k_star);
  const Eigen::Index n = m.n();
  ev.sigma_trunc =
      symmetrize(m.C * ev.p_trunc.bottomRightCorner(n, n) * m.C.transpose() + m.R2);
  ev.lsl = symmetrize(g.L * ev.sigma_trunc * g.L.transpose());
  const Eigen::MatrixXd fgk = m.F + m.G * g.K;
  Eigen::MatrixXd fi = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd fgki = Eigen::MatrixXd::Identity(n, n);
  double max_trace = 0.0;
  for (int q = 0; q <= k_star; ++q) {
    ev.fgk_pow.push_back(fgki);
    ev.h.push_back(fgki - fi);
    const double tr = (ev.h.back() * ev.lsl * ev.h.back().transpose()).trace();
    ev.term_trace.push_back(tr);
    max_trace = std::max(max_trace, tr);
    fi = m.F * fi;
    fgki = fgk * fgki;
  }
  ev.keep.resize(k_star + 1, false);
  for (int q = 1; q <= k_star; ++q)
    ev.keep[q] = ev.term_trace[q] > kTraceSkipRel * max_trace && ev.term_trace[q] > 0.0;
  const double tr_cpx = (ev.p_trunc.topLeftCorner(n, n) * (m.C.transpose() * m.C)).trace();
  ev.c_trunc = tr_cpx + m.R2.trace() -
               gamma_bar * gamma_bar * (m.R1.trace() + m.R2.trace());
  return ev;
}

inline double objective_j(const DesignEval& ev) {
  double j = 0.0;
  for (int q = 1; q <= ev.k_star; ++q)
    if (ev.keep[q]) j += std::sqrt(ev.term_trace[q]);
  return j;
}

}  // namespace detail

/// Truncated objective and constraint (J_{k*}, C_{k*}) used by the
/// stationarity system; their gradients are exactly the residual rows below.
struct DesignObjectiveParts {
  double attack_objective_trunc = 0.0;
  double constraint_trunc = 0.0;
};

inline DesignObjectiveParts design_objective_parts(const DesignProblem& prob,
                                                   const GainPair& g) {
  const auto ev = detail::design_eval(prob.model, g, prob.gamma_bar, prob.k_star);
  return {detail::objective_j(ev), ev.c_trunc};
}

namespace detail {

/// Gradients of the truncated objective and constraint in the gain entries,
/// plus the truncated and exact constraint values.
struct DesignGradients {
  Eigen::VectorXd grad_j;  // d J_{k*} / d(L, K)
  Eigen::VectorXd grad_c;  // d C_{k*} / d(L, K), truncated
  double j_trunc = 0.0;
  double c_trunc = 0.0;
  double c_exact = 0.0;
};

inline DesignGradients design_gradients(const DesignProblem& prob, const GainPair& g) {
  const PlantModel& m = prob.model;
  const Eigen::Index n = m.n(), p = m.p(), mm = m.m();
  const auto ev = design_eval(m, g, prob.gamma_bar, prob.k_star);
  const auto bundle = covariance_partials(m, g, prob.k_star);
  const Eigen::MatrixXd ctc = m.C.transpose() * m.C;

  DesignGradients out;
  out.grad_j.resize(n * p + mm * n);
  out.grad_c.resize(n * p + mm * n);
  // entries ordered like the column-major packed gain vector (vec L, vec K)
  Eigen::Index at = 0;

  std::vector<Eigen::MatrixXd> hth(ev.k_star + 1);
  for (int q = 1; q <= ev.k_star; ++q)
    if (ev.keep[q]) hth[q] = ev.h[q].transpose() * ev.h[q];

  for (Eigen::Index j = 0; j < p; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::MatrixXd& dp = bundle.dP_dL[i * p + j];
      const Eigen::MatrixXd dsigma =
          m.C * dp.bottomRightCorner(n, n) * m.C.transpose();
      const Eigen::MatrixXd jl = single_entry(n, p, i, j);
      const Eigen::MatrixXd inner = jl * ev.sigma_trunc * g.L.transpose() +
                                    g.L * dsigma * g.L.transpose() +
                                    g.L * ev.sigma_trunc * jl.transpose();
      double grad_j = 0.0;
      for (int q = 1; q <= ev.k_star; ++q) {
        if (!ev.keep[q]) continue;
        grad_j += (hth[q] * inner).trace() / (2.0 * std::sqrt(ev.term_trace[q]));
      }
      out.grad_j(at) = grad_j;
      out.grad_c(at) = (dp.topLeftCorner(n, n) * ctc).trace();
      ++at;
    }
  }

  const Eigen::MatrixXd fgk = m.F + m.G * g.K;
  for (Eigen::Index v = 0; v < n; ++v) {
    for (Eigen::Index u = 0; u < mm; ++u) {
      const Eigen::MatrixXd& dp = bundle.dP_dK[u * n + v];
      const Eigen::MatrixXd gj = m.G * single_entry(mm, n, u, v);
      // dH_q = sum_{r=1..q} (F+GK)^{r-1} G J (F+GK)^{q-r}, by recurrence
      double grad_j = 0.0;
      Eigen::MatrixXd dh = gj;  // q = 1
      for (int q = 1; q <= ev.k_star; ++q) {
        if (ev.keep[q]) {
          const double num = 2.0 * (ev.lsl * ev.h[q].transpose() * dh).trace();
          grad_j += num / (2.0 * std::sqrt(ev.term_trace[q]));
        }
        if (q < ev.k_star) dh = fgk * dh + gj * ev.fgk_pow[q];
      }
      out.grad_j(at) = grad_j;
      out.grad_c(at) = (dp.topLeftCorner(n, n) * ctc).trace();
      ++at;
    }
  }

  out.j_trunc = objective_j(ev);
  out.c_trunc = ev.c_trunc;
  const auto occ = occ_from_closed_loop(m, ev.cl);
  out.c_exact = (occ.p_x * ctc).trace() + m.R2.trace() -
                prob.gamma_bar * prob.gamma_bar * (m.R1.trace() + m.R2.trace());
  return out;
}

}  // namespace detail

/// Stationarity residuals of Omega = J + lambda C, np + mn + 1 entries:
/// the gain rows differentiate the truncated J and C (so they are exact
/// gradients of the truncated Lagrangian, finite-difference checkable), and
/// the last row is the exact-solve constraint
/// tr(C E_x P E_x' C') + tr R2 - gamma_bar^2 (tr R1 + tr R2).
inline Eigen::VectorXd stationarity_residuals(const DesignProblem& prob, const GainPair& g,
                                              double lambda) {
  const auto grads = detail::design_gradients(prob, g);
  Eigen::VectorXd r(grads.grad_j.size() + 1);
  r.head(grads.grad_j.size()) = grads.grad_j + lambda * grads.grad_c;
  r(grads.grad_j.size()) = grads.c_exact;
  return r;
}

namespace detail {

struct DesignCandidate {
  bool ok = false;
  GainPair gains;
  double lambda = 0.0;
  double attack = 0.0;
  double residual = 0.0;
  double occ = 0.0;
};

inline double least_squares_lambda(const DesignGradients& grads) {
  const double denom = grads.grad_c.squaredNorm();
  if (denom < 1e-300) return 1.0;
  return -grads.grad_j.dot(grads.grad_c) / denom;
}

/// Carries a start into the basin of the constrained minimum by BFGS on the
/// smooth quadratic-penalty merit J + rho/2 (C / tr R)^2 with an increasing
/// penalty schedule, then polishes with the damped-Newton root solve on the
/// full stationarity system. The penalty phase uses analytic gradients only,
/// which tolerates the thin curved valleys where a finite-difference-Jacobian
/// root solve stalls.
inline NewtonResult solve_design_start(const DesignProblem& prob, const GainPair& start,
                                       double lambda0, const NewtonOptions& nopt) {
  const PlantModel& m = prob.model;
  const Eigen::Index gain_dim = m.n() * m.p() + m.m() * m.n();
  const double tr_r = m.R1.trace() + m.R2.trace();

  Eigen::VectorXd theta = pack_gains(start);
  for (double rho : {3.0, 30.0, 300.0}) {
    auto merit = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
      const GainPair g = unpack_gains(m, x);
      if (!check_gains(m, g).stable) return std::numeric_limits<double>::infinity();
      const auto grads = design_gradients(prob, g);
      const double c_norm = grads.c_trunc / tr_r;
      grad = grads.grad_j + (rho * c_norm / tr_r) * grads.grad_c;
      return grads.j_trunc + 0.5 * rho * c_norm * c_norm;
    };
    BfgsOptions bopt;
    bopt.max_iter = 200;
    bopt.grad_tol = 1e-11;
    theta = bfgs_minimize(merit, theta, bopt);
  }

  const GainPair refined = unpack_gains(m, theta);
  double lambda = lambda0;
  if (check_gains(m, refined).stable)
    lambda = least_squares_lambda(design_gradients(prob, refined));

  auto residual = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
    const GainPair g = unpack_gains(m, x.head(gain_dim));
    if (!check_gains(m, g).stable) return false;
    r = stationarity_residuals(prob, g, x(gain_dim));
    return true;
  };
  Eigen::VectorXd x0(gain_dim + 1);
  x0.head(gain_dim) = theta;
  x0(gain_dim) = lambda;
  return damped_newton(residual, x0, nopt);
}

inline std::optional<GainPair> bisect_to_constraint(const PlantModel& m,
                                                    const Eigen::MatrixXd& l_dir,
                                                    const Eigen::MatrixXd& k_fixed,
                                                    double gamma_bar, double gamma0) {
  auto occ_at = [&](double t) {
    GainPair g{t * l_dir, k_fixed};
    if (!check_gains(m, g).stable) return std::numeric_limits<double>::infinity();
    return occ_gain(m, g).gamma;
  };
  if (!(occ_at(0.0) < std::numeric_limits<double>::infinity())) return std::nullopt;
  double hi = 0.0;
  for (double probe : {1.0, 1.5, 2.0, 3.0}) {
    if (occ_at(probe) <= gamma_bar) {
      hi = probe;
      break;
    }
  }
  if (hi == 0.0) return std::nullopt;  // this ray never reaches gamma_bar
  double lo = 0.0;  // occ(0) = gamma0 >= gamma_bar
  (void)gamma0;
  for (int it = 0; it < 70; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (occ_at(mid) > gamma_bar)
      lo = mid;
    else
      hi = mid;
  }
  GainPair g{hi * l_dir, k_fixed};
  if (!check_gains(m, g).stable) return std::nullopt;
  return g;
}

inline TradeoffPoint design_gains_impl(const DesignProblem& prob,
                                       const std::vector<std::pair<GainPair, double>>& warm,
                                       int fresh_starts) {
  const PlantModel& m = prob.model;
  const double gamma0 = open_loop_gain(m);
  if (prob.gamma_bar > gamma0 * (1.0 + 1e-9)) {
    std::ostringstream os;
    os << "design_gains: gamma_bar = " << prob.gamma_bar
       << " exceeds the open-loop gain gamma0 = " << gamma0
       << "; the trade-off interval is [gamma*, gamma0]";
    throw std::invalid_argument(os.str());
  }
  if (std::abs(prob.gamma_bar - gamma0) <= 1e-4 * gamma0) {
    // near-open-loop band: within the point's own occ tolerance of gamma0
    // open-loop endpoint: the trivial solution severs the attack path
    TradeoffPoint pt;
    pt.gamma_bar = prob.gamma_bar;
    pt.gains = GainPair::zero(m);
    pt.lambda = 0.0;
    const auto summary = summarize(
        shape_term_sequences(m, pt.gains, prob.detector, prob.truncation, prob.k_star));
    pt.sqrt_trace_qstar = summary.sqrt_trace_total;
    pt.attack_objective = summary.attack_objective;
    pt.residual_norm = 0.0;
    pt.occ_gamma = gamma0;
    return pt;
  }

  const Eigen::Index n = m.n(), p = m.p(), mm = m.m();
  const Eigen::Index gain_dim = n * p + mm * n;
  const double tol = prob.solver.residual_tol * std::max(1.0, m.R1.trace() + m.R2.trace());

  auto residual = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
    const GainPair g = unpack_gains(m, x.head(gain_dim));
    if (!check_gains(m, g).stable) return false;
    r = stationarity_residuals(prob, g, x(gain_dim));
    return true;
  };

  // start list: warm starts first, then constraint-bisected Kalman/LQR rays,
  // then seeded random perturbations
  std::vector<std::pair<GainPair, double>> starts;
  auto push_start = [&](const GainPair& g, double lambda) {
    starts.emplace_back(g, lambda);
  };
  for (const auto& [g, lam] : warm)
    if (check_gains(m, g).stable && g.K.norm() > 1e-9 && g.L.norm() > 1e-9)
      push_start(g, lam);  // near-trivial warm points sit on the sqrt kink

  const Eigen::MatrixXd lk = kalman_gain(m);
  const Eigen::MatrixXd kl = lqr_gain(m);
  const double scales[] = {1.0, 0.5, 1.5, 0.25, 2.0};
  for (double b : scales) {
    if (static_cast<int>(starts.size()) >= static_cast<int>(warm.size()) + fresh_starts) break;
    auto g = bisect_to_constraint(m, lk, b * kl, prob.gamma_bar, gamma0);
    if (g) push_start(*g, least_squares_lambda(design_gradients(prob, *g)));
  }
  int idx = 0;
  while (static_cast<int>(starts.size()) < static_cast<int>(warm.size()) + fresh_starts &&
         idx < 60 * fresh_starts) {
    rng::Stream stream(prob.solver.seed, 0xde51e4ULL + idx++);
    const double sigma = 0.1 + 0.3 * (idx % 4);
    Eigen::MatrixXd ld = lk, kd = kl;
    for (Eigen::Index rr = 0; rr < ld.rows(); ++rr)
      for (Eigen::Index cc = 0; cc < ld.cols(); ++cc)
        ld(rr, cc) *= (1.0 + sigma * stream.normal());
    for (Eigen::Index rr = 0; rr < kd.rows(); ++rr)
      for (Eigen::Index cc = 0; cc < kd.cols(); ++cc)
        kd(rr, cc) *= (1.0 + sigma * stream.normal());
    auto g = bisect_to_constraint(m, ld, kd, prob.gamma_bar, gamma0);
    if (g) push_start(*g, least_squares_lambda(design_gradients(prob, *g)));
  }
  if (starts.empty()) {
    throw numerical_error(
        "design_gains: no stable start found; gamma_bar may be outside the trade-off interval");
  }

  NewtonOptions nopt;
  nopt.max_iter = prob.solver.max_iter;
  nopt.tol_inf = tol;

  std::vector<DesignCandidate> cands(starts.size());
  std::vector<double> best_residuals(starts.size(),
                                     std::numeric_limits<double>::infinity());
  parallel_for(static_cast<std::int64_t>(starts.size()), [&](std::int64_t s) {
    auto res = solve_design_start(prob, starts[s].first, starts[s].second, nopt);
    best_residuals[s] = res.residual_inf;
    if (!res.converged) return;
    const GainPair g = unpack_gains(m, res.x.head(gain_dim));
    const double lambda = res.x(gain_dim);
    const double occ = occ_gain(m, g).gamma;
    if (std::abs(occ - prob.gamma_bar) > 1e-4 * prob.gamma_bar) return;

    // projected Hessian of Omega on the constraint tangent space; saddle
    // points and maxima of the Lagrangian in the gains are rejected
    Eigen::MatrixXd hess(gain_dim, gain_dim);
    bool ok = true;
    Eigen::VectorXd rp, rm;
    for (Eigen::Index c = 0; c < gain_dim && ok; ++c) {
      const double h = 1e-4 * std::max(1.0, std::abs(res.x(c)));
      Eigen::VectorXd xp = res.x, xm = res.x;
      xp(c) += h;
      xm(c) -= h;
      if (!residual(xp, rp) || !residual(xm, rm)) {
        ok = false;
        break;
      }
      hess.col(c) = (rp.head(gain_dim) - rm.head(gain_dim)) / (2.0 * h);
    }
    if (!ok) return;
    // constraint gradient rows (lambda coefficients) span the normal space
    Eigen::VectorXd r0, r1;
    Eigen::VectorXd x0 = res.x, x1 = res.x;
    x1(gain_dim) += 1.0;
    if (!residual(x0, r0) || !residual(x1, r1)) return;
    const Eigen::VectorXd gc = (r1 - r0).head(gain_dim);
    Eigen::MatrixXd tangent;
    if (gc.norm() < 1e-14) {
      tangent = Eigen::MatrixXd::Identity(gain_dim, gain_dim);
    } else {
      Eigen::HouseholderQR<Eigen::MatrixXd> qr(gc);
      tangent = qr.householderQ() * Eigen::MatrixXd::Identity(gain_dim, gain_dim)
                    .rightCols(gain_dim - 1);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> hes(
        symmetrize(tangent.transpose() * symmetrize(hess) * tangent));
    if (hes.eigenvalues().size() && hes.eigenvalues().minCoeff() < -1e-6) return;

    DesignCandidate c;
    c.ok = true;
    c.gains = g;
    c.lambda = lambda;
    c.residual = res.residual_inf;
    c.occ = occ;
    DetectorConfig unit_det;
    unit_det.alpha = 1.0;
    unit_det.p = static_cast<int>(p);
    NoiseTruncation unit_trunc;
    unit_trunc.nu_bar = 1.0;
    c.attack = attack_objective(
        shape_term_sequences(m, g, unit_det, unit_trunc, prob.k_star));
    cands[s] = c;
  });

  const DesignCandidate* pick = nullptr;
  for (const auto& c : cands) {
    if (!c.ok) continue;
    if (!pick || c.attack < pick->attack ||
        (c.attack == pick->attack && lexicographic_less(c.gains, pick->gains)))
      pick = &c;
  }
  if (!pick) {
    double best = std::numeric_limits<double>::infinity();
    for (double b : best_residuals) best = std::min(best, b);
    std::ostringstream os;
    os << "design_gains: no start converged at gamma_bar = " << prob.gamma_bar
       << " (best residual " << best << ", tolerance " << tol
       << "); the trade-off interval is [gamma*, gamma0 = " << gamma0
       << "] and gamma_bar may lie below gamma*";
    throw numerical_error(os.str());
  }

  TradeoffPoint pt;
  pt.gamma_bar = prob.gamma_bar;
  pt.gains = pick->gains;
  pt.lambda = pick->lambda;
  pt.residual_norm = pick->residual;
  pt.occ_gamma = pick->occ;
  const auto summary = summarize(
      shape_term_sequences(m, pick->gains, prob.detector, prob.truncation, prob.k_star));
  pt.sqrt_trace_qstar = summary.sqrt_trace_total;
  pt.attack_objective = summary.attack_objective;
  return pt;
}

}  // namespace detail

/// Theorem-8 design: minimize the attack objective subject to the OCC gain
/// equality at gamma_bar, by multi-start root solve of the stationarity
/// system. Among converged minima returns the one with the smallest attack
/// objective; sqrt tr Q* is recomputed at the returned gains.
inline TradeoffPoint design_gains(const DesignProblem& prob) {
  return detail::design_gains_impl(prob, {}, prob.solver.starts);
}

struct SweepFailure {
  double gamma_bar = 0.0;
  std::string message;
};

struct SweepOutcome {
  std::vector<TradeoffPoint> points;    // ascending in gamma_bar
  std::vector<SweepFailure> failures;
};

/// Performance-security curve over [gamma_lo, gamma_hi]: geometric spacing
/// (densest near the gamma* end where the curve is steep), processed from the
/// open-loop end so each point warm-starts from its neighbor plus a fixed
/// number of fresh starts. Per-point failures are recorded and the sweep
/// continues.
inline SweepOutcome tradeoff_sweep(const PlantModel& m, const DetectorConfig& det,
                                   const NoiseTruncation& trunc, double gamma_lo,
                                   double gamma_hi, int steps, int k_star,
                                   const SolverConfig& solver) {
  if (steps < 1) throw std::invalid_argument("tradeoff_sweep: steps < 1");
  if (!(gamma_lo > 0.0) || gamma_hi < gamma_lo)
    throw std::invalid_argument("tradeoff_sweep: bad gamma range");
  std::vector<double> grid(steps);
  for (int i = 0; i < steps; ++i) {
    grid[i] = steps == 1 ? gamma_lo
                         : gamma_lo * std::pow(gamma_hi / gamma_lo,
                                               static_cast<double>(i) / (steps - 1));
  }
  SweepOutcome out;
  std::vector<std::pair<GainPair, double>> warm;
  for (int i = steps - 1; i >= 0; --i) {
    DesignProblem prob{m, det, trunc, grid[i], k_star, solver};
    // the first processed point gets the full start budget; warm-started
    // neighbors run a reduced fixed count of fresh starts
    const int fresh = warm.empty() ? solver.starts : std::max(4, solver.starts / 4);
    try {
      TradeoffPoint pt = detail::design_gains_impl(prob, warm, fresh);
      warm.assign(1, {pt.gains, pt.lambda});
      out.points.push_back(std::move(pt));
    } catch (const std::exception& e) {
      out.failures.push_back({grid[i], e.what()});
    }
  }
  std::reverse(out.points.begin(), out.points.end());
  return out;
}

/// Appendix-style diagnostic for gain choices that trivially zero the attack
/// impact. L = 0 or K = 0 always work; a nonzero family needs structure:
/// GK = 0 with K != 0 when G is column-rank deficient, and a nonzero L when
/// null(F) is annihilatable through GK (common null space of F and GK).
struct TrivialDiagnostic {
  Eigen::Index rank_G = 0;
  bool k_forced_zero = false;   // G full column rank: GK = 0 forces K = 0
  bool nonzero_k_family = false;
  Eigen::Index null_F_dim = 0;
  bool nonzero_l_family = false;
  double verification_residual = std::numeric_limits<double>::quiet_NaN();
  Eigen::Index supplied_k_common_null_dim = -1;
  bool generic_only = true;
};

inline TrivialDiagnostic trivial_solution_check(const PlantModel& m,
                                                const Eigen::MatrixXd* supplied_K = nullptr) {
  TrivialDiagnostic d;
  const Eigen::Index n = m.n();
  d.rank_G = matrix_rank(m.G);
  d.k_forced_zero = d.rank_G == m.m();
  d.nonzero_k_family = d.rank_G < m.m();

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m.F, Eigen::ComputeFullV);
  const double smax = svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
  d.null_F_dim = n - matrix_rank(m.F);
  if (d.null_F_dim > 0 && m.G.cwiseAbs().maxCoeff() > 0.0) {
    // can some K != 0 annihilate null(F) through G?
    const Eigen::MatrixXd null_basis = svd.matrixV().rightCols(d.null_F_dim);
    Eigen::MatrixXd k_example;
    if (d.nonzero_k_family) {
      // GK = 0 with K != 0 kills everything
      Eigen::JacobiSVD<Eigen::MatrixXd> gs(m.G, Eigen::ComputeFullV);
      k_example = gs.matrixV().rightCols(m.m() - d.rank_G).col(0) *
                  Eigen::RowVectorXd::Ones(n);
    } else if (d.null_F_dim < n) {
      // full-column-rank G: need K != 0 with K null(F) = 0
      Eigen::JacobiSVD<Eigen::MatrixXd> ns(null_basis.transpose(), Eigen::ComputeFullV);
      const Eigen::MatrixXd complement = ns.matrixV().rightCols(n - d.null_F_dim);
      k_example = Eigen::MatrixXd::Ones(m.m(), 1) * complement.col(0).transpose();
    }
    if (k_example.size() > 0) {
      d.nonzero_l_family = true;
      // verify by direct product with L built from null(F)
      Eigen::MatrixXd l_example(n, m.p());
      for (Eigen::Index c = 0; c < m.p(); ++c)
        l_example.col(c) = null_basis.col(c % null_basis.cols());
      double resid = 0.0;
      Eigen::MatrixXd gk = m.G * k_example;
      Eigen::MatrixXd fl = Eigen::MatrixXd::Identity(n, n);
      const double scale = std::max({gk.norm(), l_example.norm(), smax, 1.0});
      for (Eigen::Index l = 0; l < n; ++l) {
        resid = std::max(resid, (gk * fl * l_example).norm() / scale);
        fl = m.F * fl;
      }
      d.verification_residual = resid;
    }
  }
  d.generic_only = !(d.nonzero_k_family || d.nonzero_l_family);

  if (supplied_K) {
    const Eigen::MatrixXd gk = m.G * (*supplied_K);
    Eigen::MatrixXd stacked(n * n, n);
    Eigen::MatrixXd fl = Eigen::MatrixXd::Identity(n, n);
    for (Eigen::Index l = 0; l < n; ++l) {
      stacked.middleRows(l * n, n) = gk * fl;
      fl = m.F * fl;
    }
    d.supplied_k_common_null_dim = n - matrix_rank(stacked);
  }
  return d;
}

}  // namespace reachsec
