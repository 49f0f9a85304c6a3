#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <vector>

#include "reachsec/linalg.hpp"
#include "reachsec/model.hpp"
#include "reachsec/newton.hpp"
#include "reachsec/parallel.hpp"
#include "reachsec/reachability.hpp"
#include "reachsec/rng.hpp"

namespace reachsec {

/// Noise-to-output gain and the steady stacked covariance P = A P A' + R.
struct OccResult {
  double gamma = 0.0;
  Eigen::MatrixXd p_stack;  // 2n x 2n
  Eigen::MatrixXd p_x;      // n x n state block E_x P E_x'
};

/// Exact steady covariance of the stacked closed loop.
inline Eigen::MatrixXd solve_steady_covariance(const ClosedLoopRealization& cl) {
  return stein_solve(cl.A, cl.R);
}

/// Truncated expansion P ~= sum_{q=0}^{k} A^q R A^q'; the tail decays with
/// ratio rho(A)^2. Used for the analytic gradients so that they are the exact
/// derivatives of what they differentiate.
inline Eigen::MatrixXd truncated_steady_covariance(const Eigen::MatrixXd& a,
                                                   const Eigen::MatrixXd& r, int k) {
  Eigen::MatrixXd term = r;
  Eigen::MatrixXd acc = r;
  for (int q = 1; q <= k; ++q) {
    term = a * term * a.transpose();
    acc += term;
  }
  return symmetrize(acc);
}

inline double gamma_from_state_covariance(const PlantModel& m, const Eigen::MatrixXd& p_x) {
  const double num = (p_x * (m.C.transpose() * m.C)).trace() + m.R2.trace();
  const double den = m.R1.trace() + m.R2.trace();
  return std::sqrt(num / den);
}

inline OccResult occ_from_closed_loop(const PlantModel& m, const ClosedLoopRealization& cl) {
  OccResult out;
  out.p_stack = solve_steady_covariance(cl);
  out.p_x = out.p_stack.topLeftCorner(m.n(), m.n());
  out.gamma = gamma_from_state_covariance(m, out.p_x);
  return out;
}

/// OCC ||H||2 gain gamma = sqrt((tr(C P_x C') + tr R2) / (tr R1 + tr R2)).
inline OccResult occ_gain(const PlantModel& m, const GainPair& g) {
  return occ_from_closed_loop(m, assemble_closed_loop(m, g));
}

/// Open-loop gain gamma_0 (L = 0 or K = 0 cut the feedback path either way):
/// P_x solves F P_x F' - P_x + R1 = 0.
inline double open_loop_gain(const PlantModel& m) {
  const double rho = spectral_radius(m.F);
  if (rho >= 1.0) {
    std::ostringstream os;
    os << "open_loop_gain: rho(F) = " << rho << " >= 1";
    throw numerical_error(os.str());
  }
  return gamma_from_state_covariance(m, stein_solve(m.F, m.R1));
}

/// Partial derivatives of the truncated stacked covariance with respect to
/// every gain entry: dP_dL[i*p + j] = dP/dL_{ij}, dP_dK[u*n + v] = dP/dK_{uv}.
/// Each matrix is symmetric by construction (a sum plus its transpose).
struct GradientBundle {
  int n = 0, p = 0, m_in = 0;
  int horizon = 0;
  std::vector<Eigen::MatrixXd> dP_dL;
  std::vector<Eigen::MatrixXd> dP_dK;
};

inline GradientBundle covariance_partials(const PlantModel& m, const GainPair& g, int k_star) {
  if (k_star < 0) throw std::invalid_argument("covariance_partials: negative horizon");
  const auto cl = assemble_closed_loop(m, g);
  const Eigen::Index n = m.n(), p = m.p(), mm = m.m();
  const Eigen::Index nn = 2 * n;

  std::vector<Eigen::MatrixXd> apow(k_star + 1);
  apow[0] = Eigen::MatrixXd::Identity(nn, nn);
  for (int q = 1; q <= k_star; ++q) apow[q] = cl.A * apow[q - 1];

  GradientBundle b;
  b.n = static_cast<int>(n);
  b.p = static_cast<int>(p);
  b.m_in = static_cast<int>(mm);
  b.horizon = k_star;
  b.dP_dL.resize(n * p);
  b.dP_dK.resize(mm * n);

  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) {
      const Eigen::MatrixXd jl = single_entry(n, p, i, j);
      Eigen::MatrixXd dr = Eigen::MatrixXd::Zero(nn, nn);
      dr.bottomRightCorner(n, n) =
          jl * m.R2 * g.L.transpose() + g.L * m.R2 * jl.transpose();
      Eigen::MatrixXd da = Eigen::MatrixXd::Zero(nn, nn);  // dA/dL_{ij} = -da
      da.bottomRightCorner(n, n) = jl * m.C;

      Eigen::MatrixXd term1 = Eigen::MatrixXd::Zero(nn, nn);
      for (int q = 0; q <= k_star; ++q)
        term1 += apow[q] * dr * apow[q].transpose();
      Eigen::MatrixXd term2 = Eigen::MatrixXd::Zero(nn, nn);
      Eigen::MatrixXd w = da;  // w_q = sum_{r=1..q} A^{r-1} da A^{q-r}
      for (int q = 1; q <= k_star; ++q) {
        const Eigen::MatrixXd mqt = w * cl.R * apow[q].transpose();
        term2 += mqt + mqt.transpose();
        if (q < k_star) w = cl.A * w + da * apow[q];
      }
      b.dP_dL[i * p + j] = symmetrize(term1 - term2);
    }
  }

  for (Eigen::Index u = 0; u < mm; ++u) {
    for (Eigen::Index v = 0; v < n; ++v) {
      const Eigen::MatrixXd gj = m.G * single_entry(mm, n, u, v);
      Eigen::MatrixXd da = Eigen::MatrixXd::Zero(nn, nn);
      da.topLeftCorner(n, n) = gj;
      da.topRightCorner(n, n) = -gj;

      Eigen::MatrixXd term = Eigen::MatrixXd::Zero(nn, nn);
      Eigen::MatrixXd w = da;
      for (int q = 1; q <= k_star; ++q) {
        const Eigen::MatrixXd mqt = w * cl.R * apow[q].transpose();
        term += mqt + mqt.transpose();
        if (q < k_star) w = cl.A * w + da * apow[q];
      }
      b.dP_dK[u * n + v] = symmetrize(term);
    }
  }
  return b;
}

struct SolverConfig {
  int starts = 64;
  double residual_tol = 1e-8;  // scaled by tr R1 + tr R2
  int max_iter = 150;
  std::uint64_t seed = 1;
  double gamma_tie_rel = 1e-4;  // candidates within this of the best gamma tie-break on J
};

/// Steady-state Kalman observer gain (predictor form, F - LC stable) from the
/// filter Riccati iteration. Used only to seed the multi-start solvers.
inline Eigen::MatrixXd kalman_gain(const PlantModel& m) {
  Eigen::MatrixXd p = m.R1;
  for (int it = 0; it < 20000; ++it) {
    const Eigen::MatrixXd s = m.C * p * m.C.transpose() + m.R2;
    const Eigen::MatrixXd k = p * m.C.transpose() * s.ldlt().solve(
                                  Eigen::MatrixXd::Identity(m.p(), m.p()));
    const Eigen::MatrixXd p_next =
        symmetrize(m.F * (p - k * m.C * p) * m.F.transpose() + m.R1);
    if ((p_next - p).norm() <= 1e-13 * std::max(1.0, p.norm())) {
      p = p_next;
      break;
    }
    p = p_next;
  }
  const Eigen::MatrixXd s = m.C * p * m.C.transpose() + m.R2;
  return m.F * p * m.C.transpose() *
         s.ldlt().solve(Eigen::MatrixXd::Identity(m.p(), m.p()));
}

/// LQR-style controller gain (F + GK stable) from the control Riccati
/// iteration with state cost C'C and unit input cost. Seed only.
inline Eigen::MatrixXd lqr_gain(const PlantModel& m) {
  Eigen::MatrixXd s = m.C.transpose() * m.C;
  const Eigen::MatrixXd q = m.C.transpose() * m.C;
  for (int it = 0; it < 20000; ++it) {
    const Eigen::MatrixXd gsg =
        m.G.transpose() * s * m.G + Eigen::MatrixXd::Identity(m.m(), m.m());
    const Eigen::MatrixXd fsg = m.F.transpose() * s * m.G;
    const Eigen::MatrixXd s_next =
        symmetrize(m.F.transpose() * s * m.F - fsg * gsg.ldlt().solve(fsg.transpose()) + q);
    if ((s_next - s).norm() <= 1e-13 * std::max(1.0, s.norm())) {
      s = s_next;
      break;
    }
    s = s_next;
  }
  const Eigen::MatrixXd gsg =
      m.G.transpose() * s * m.G + Eigen::MatrixXd::Identity(m.m(), m.m());
  return -gsg.ldlt().solve(m.G.transpose() * s * m.F);
}

namespace detail {

inline Eigen::VectorXd pack_gains(const GainPair& g) {
  Eigen::VectorXd x(g.L.size() + g.K.size());
  x.head(g.L.size()) = Eigen::Map<const Eigen::VectorXd>(g.L.data(), g.L.size());
  x.tail(g.K.size()) = Eigen::Map<const Eigen::VectorXd>(g.K.data(), g.K.size());
  return x;
}

inline GainPair unpack_gains(const PlantModel& m, const Eigen::VectorXd& x) {
  GainPair g;
  g.L = Eigen::Map<const Eigen::MatrixXd>(x.data(), m.n(), m.p());
  g.K = Eigen::Map<const Eigen::MatrixXd>(x.data() + m.n() * m.p(), m.m(), m.n());
  return g;
}

/// Deterministic multi-start seeds: the Kalman/LQR pair, scaled variants, and
/// seeded random perturbations (resampled toward stability).
inline std::vector<GainPair> multistart_seeds(const PlantModel& m, int count,
                                              std::uint64_t seed) {
  const Eigen::MatrixXd lk = kalman_gain(m);
  const Eigen::MatrixXd kl = lqr_gain(m);
  std::vector<GainPair> seeds;
  auto push_if_stable = [&](const GainPair& g) {
    if (static_cast<int>(seeds.size()) >= count) return;
    if (check_gains(m, g).stable) seeds.push_back(g);
  };
  const double scales[] = {1.0, 0.5, 1.5, 0.25, 0.75};
  for (double a : scales)
    for (double b : scales) {
      if (static_cast<int>(seeds.size()) >= std::min(count, 9)) break;
      push_if_stable({a * lk, b * kl});
    }
  push_if_stable(GainPair::zero(m));
  const double l_scale = std::max(lk.norm(), 0.1);
  const double k_scale = std::max(kl.norm(), 0.1);
  const double sigmas[] = {0.05, 0.15, 0.4, 1.0};
  int idx = 0;
  while (static_cast<int>(seeds.size()) < count && idx < 50 * count) {
    rng::Stream stream(seed, 0x5eedULL + idx++);
    double sigma = sigmas[idx % 4];
    for (int tries = 0; tries < 60; ++tries) {
      GainPair g;
      g.L = lk;
      g.K = kl;
      for (Eigen::Index r = 0; r < g.L.rows(); ++r)
        for (Eigen::Index c = 0; c < g.L.cols(); ++c) g.L(r, c) += sigma * l_scale * stream.normal();
      for (Eigen::Index r = 0; r < g.K.rows(); ++r)
        for (Eigen::Index c = 0; c < g.K.cols(); ++c) g.K(r, c) += sigma * k_scale * stream.normal();
      if (check_gains(m, g).stable) {
        seeds.push_back(g);
        break;
      }
      sigma *= 0.7;  // pull back toward the stable seed pair
    }
  }
  return seeds;
}

inline bool lexicographic_less(const GainPair& a, const GainPair& b) {
  const Eigen::VectorXd va = pack_gains(a), vb = pack_gains(b);
  for (Eigen::Index i = 0; i < va.size(); ++i) {
    if (va(i) < vb(i)) return true;
    if (va(i) > vb(i)) return false;
  }
  return false;
}

}  // namespace detail

struct MinGainResult {
  double gamma_star = 0.0;
  GainPair gains;
  double residual_norm = 0.0;
  int converged_starts = 0;
  double attack_objective = 0.0;
};

/// Gradient system of Lemma-type stationarity for the smallest OCC gain:
/// tr(C E_x dP/dL_{ij} E_x' C') = 0 and tr(C E_x dP/dK_{uv} E_x' C') = 0,
/// evaluated on the truncated expansion at k_star. Entries are ordered like
/// the column-major packed gain vector (vec L, vec K).
inline Eigen::VectorXd occ_gradient_residual(const PlantModel& m, const GainPair& g, int k_star) {
  const auto bundle = covariance_partials(m, g, k_star);
  const Eigen::MatrixXd ctc = m.C.transpose() * m.C;
  const Eigen::Index n = m.n(), p = m.p(), mm = m.m();
  Eigen::VectorXd r(bundle.dP_dL.size() + bundle.dP_dK.size());
  Eigen::Index at = 0;
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index i = 0; i < n; ++i)
      r(at++) = (bundle.dP_dL[i * p + j].topLeftCorner(n, n) * ctc).trace();
  for (Eigen::Index v = 0; v < n; ++v)
    for (Eigen::Index u = 0; u < mm; ++u)
      r(at++) = (bundle.dP_dK[u * n + v].topLeftCorner(n, n) * ctc).trace();
  return r;
}

/// Smallest OCC ||H||2 gain and the gains achieving it. Multi-start damped
/// Newton on the stationarity system; local maxima and saddle points are
/// rejected by a finite-difference Hessian check, and candidates within
/// gamma_tie_rel of the best gain tie-break on the attack objective (the
/// noise part of sqrt tr Q* is gain-independent, so ranking by J is ranking
/// by sqrt tr Q*).
inline MinGainResult min_occ_gain(const PlantModel& m, const SolverConfig& cfg, int k_star) {
  const double tol = cfg.residual_tol * (m.R1.trace() + m.R2.trace());
  auto residual = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
    const GainPair g = detail::unpack_gains(m, x);
    if (!check_gains(m, g).stable) return false;
    r = occ_gradient_residual(m, g, k_star);
    return true;
  };

  const auto seeds = detail::multistart_seeds(m, cfg.starts, cfg.seed);
  NewtonOptions nopt;
  nopt.max_iter = cfg.max_iter;
  nopt.tol_inf = tol;

  // smooth descent phase before the root polish: minimizes the truncated
  // output-trace objective with its analytic gradient, which reaches the
  // stationary basin even where the finite-difference Jacobian is too noisy
  // for Newton steps
  const Eigen::MatrixXd ctc_obj = m.C.transpose() * m.C;
  auto trace_objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
    const GainPair g = detail::unpack_gains(m, x);
    if (!check_gains(m, g).stable) return std::numeric_limits<double>::infinity();
    const auto cl = assemble_closed_loop(m, g);
    const Eigen::MatrixXd pt = truncated_steady_covariance(cl.A, cl.R, k_star);
    grad = occ_gradient_residual(m, g, k_star);
    return (pt.topLeftCorner(m.n(), m.n()) * ctc_obj).trace();
  };

  struct Candidate {
    bool ok = false;
    GainPair gains;
    double gamma = 0.0;
    double attack = 0.0;
    double residual = 0.0;
  };
  std::vector<Candidate> cands(seeds.size());
  DetectorConfig unit_det;
  unit_det.alpha = 1.0;
  unit_det.p = static_cast<int>(m.p());
  NoiseTruncation unit_trunc;
  unit_trunc.nu_bar = 1.0;

  parallel_for(static_cast<std::int64_t>(seeds.size()), [&](std::int64_t s) {
    BfgsOptions bopt;
    bopt.max_iter = 250;
    bopt.grad_tol = 1e-12;
    const Eigen::VectorXd refined =
        bfgs_minimize(trace_objective, detail::pack_gains(seeds[s]), bopt);
    auto res = damped_newton(residual, refined, nopt);
    if (!res.converged) return;
    const GainPair g = detail::unpack_gains(m, res.x);

    // reject saddle points / maxima: Hessian of tr(C E_x P E_x' C') via
    // central differences of the analytic gradient, step 1e-4
    const Eigen::Index dim = res.x.size();
    Eigen::MatrixXd hess(dim, dim);
    bool hess_ok = true;
    for (Eigen::Index c = 0; c < dim && hess_ok; ++c) {
      const double h = 1e-4 * std::max(1.0, std::abs(res.x(c)));
      Eigen::VectorXd xp = res.x, xm = res.x;
      xp(c) += h;
      xm(c) -= h;
      Eigen::VectorXd rp, rm;
      if (!residual(xp, rp) || !residual(xm, rm)) {
        hess_ok = false;
        break;
      }
      hess.col(c) = (rp - rm) / (2.0 * h);
    }
    if (!hess_ok) return;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> hes(symmetrize(hess));
    if (hes.eigenvalues().minCoeff() < -1e-6) return;

    Candidate c;
    c.ok = true;
    c.gains = g;
    c.gamma = occ_gain(m, g).gamma;
    c.attack = attack_objective(shape_term_sequences(m, g, unit_det, unit_trunc, k_star));
    c.residual = res.residual_inf;
    cands[s] = c;
  });

  std::vector<Candidate> good;
  for (auto& c : cands)
    if (c.ok) good.push_back(std::move(c));
  if (good.empty()) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      auto res = damped_newton(residual, detail::pack_gains(seeds[s]), nopt);
      best = std::min(best, res.residual_inf);
    }
    std::ostringstream os;
    os << "min_occ_gain: no start converged (best residual " << best << ", tolerance " << tol
       << ")";
    throw numerical_error(os.str());
  }

  double best_gamma = std::numeric_limits<double>::infinity();
  for (const auto& c : good) best_gamma = std::min(best_gamma, c.gamma);
  const Candidate* pick = nullptr;
  for (const auto& c : good) {
    if (c.gamma > best_gamma * (1.0 + cfg.gamma_tie_rel)) continue;
    if (!pick || c.attack < pick->attack ||
        (c.attack == pick->attack && detail::lexicographic_less(c.gains, pick->gains)))
      pick = &c;
  }

  MinGainResult out;
  out.gamma_star = pick->gamma;
  out.gains = pick->gains;
  out.residual_norm = pick->residual;
  out.converged_starts = static_cast<int>(good.size());
  out.attack_objective = pick->attack;
  return out;
}

}  // namespace reachsec
