#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <vector>

#include "reachsec/ellipsoid.hpp"
#include "reachsec/linalg.hpp"
#include "reachsec/model.hpp"
#include "reachsec/parallel.hpp"
#include "reachsec/rng.hpp"

namespace reachsec {

/// Shape-matrix families of the attacked closed loop:
///   q_nu[i]    = nu_bar * F^i R1 F^i'          (process-noise terms)
///   q_delta[i] = alpha * H_i L Sigma L' H_i'   (attack terms)
/// with H_i = (F+GK)^i - F^i (so H_0 = 0 exactly; it is stored but skipped by
/// the trace cut in every downstream sum). attack_core holds the alpha-free
/// attack matrices H_i L Sigma L' H_i'.
struct ReachabilityTerms {
  std::vector<Eigen::MatrixXd> q_nu;
  std::vector<Eigen::MatrixXd> q_delta;
  std::vector<Eigen::MatrixXd> attack_core;
  std::vector<Eigen::MatrixXd> h;
  int horizon = 0;
  double alpha = 0.0;
  double nu_bar = 0.0;
  Eigen::MatrixXd sigma;
  Eigen::MatrixXd sigma_sqrt;
};

inline ReachabilityTerms shape_term_sequences(const PlantModel& m, const GainPair& g,
                                              const DetectorConfig& det,
                                              const NoiseTruncation& trunc, int k) {
  if (k < 0) throw std::invalid_argument("shape_term_sequences: negative horizon");
  const auto st = check_gains(m, g);
  if (!st.stable) {
    std::ostringstream os;
    os << "shape_term_sequences: unstable gains (rho(F+GK) = " << st.rho_control
       << ", rho(F-LC) = " << st.rho_observer << ")";
    throw numerical_error(os.str());
  }
  auto rc = residual_covariance(m, g.L);
  ReachabilityTerms t;
  t.horizon = k;
  t.alpha = det.alpha;
  t.nu_bar = trunc.nu_bar;
  t.sigma = rc.Sigma;
  t.sigma_sqrt = rc.Sigma_sqrt;
  const Eigen::Index n = m.n();
  const Eigen::MatrixXd lsl = symmetrize(g.L * rc.Sigma * g.L.transpose());
  const Eigen::MatrixXd fgk = m.F + m.G * g.K;
  Eigen::MatrixXd fi = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd fgki = Eigen::MatrixXd::Identity(n, n);
  t.q_nu.reserve(k + 1);
  t.q_delta.reserve(k + 1);
  for (int i = 0; i <= k; ++i) {
    const Eigen::MatrixXd hi = fgki - fi;
    const Eigen::MatrixXd core = symmetrize(hi * lsl * hi.transpose());
    t.h.push_back(hi);
    t.attack_core.push_back(core);
    t.q_delta.push_back(det.alpha * core);
    t.q_nu.push_back(symmetrize(trunc.nu_bar * fi * m.R1 * fi.transpose()));
    fi = m.F * fi;        // powers by repeated multiplication
    fgki = fgk * fgki;
  }
  return t;
}

namespace detail {

inline std::vector<Eigen::MatrixXd> merged_shapes(const ReachabilityTerms& t, int upto) {
  std::vector<Eigen::MatrixXd> shapes;
  shapes.reserve(2 * (upto + 1));
  for (int i = 0; i <= upto; ++i) {
    shapes.push_back(t.q_nu[i]);
    shapes.push_back(t.q_delta[i]);
  }
  return shapes;
}

}  // namespace detail

/// Minimum-trace ellipsoidal bound on the reachable set: min_trace_sum over
/// the merged noise and attack families.
inline Ellipsoid reachable_outer_bound(const ReachabilityTerms& t) {
  return min_trace_sum(detail::merged_shapes(t, t.horizon));
}

/// Attack-impact objective J = sum_i sqrt(tr(H_i L Sigma L' H_i')), i >= 1.
/// Excludes the detector threshold and all noise terms: neither depends on
/// the gains, so they play no role in minimizing the attack impact.
inline double attack_objective(const ReachabilityTerms& t) {
  double mx = 0.0;
  for (const auto& q : t.attack_core) mx = std::max(mx, q.trace());
  const double cut = kTraceSkipRel * mx;
  double j = 0.0;
  for (const auto& q : t.attack_core) {
    const double tr = q.trace();
    if (tr > cut && tr > 0.0) j += std::sqrt(tr);
  }
  return j;
}

struct ReachabilitySummary {
  int k_star = 0;
  Ellipsoid q_star;
  double sqrt_trace_total = 0.0;   // sum of sqrt-traces over both families
  double attack_objective = 0.0;   // alpha-free attack part
  double noise_only_trace = 0.0;   // noise family alone
};

inline ReachabilitySummary summarize(const ReachabilityTerms& t) {
  ReachabilitySummary s;
  s.k_star = t.horizon;
  s.q_star = reachable_outer_bound(t);
  s.attack_objective = attack_objective(t);
  const auto shapes = detail::merged_shapes(t, t.horizon);
  double mx = 0.0;
  for (const auto& q : shapes) mx = std::max(mx, q.trace());
  const double cut = kTraceSkipRel * mx;
  for (const auto& q : shapes) {
    const double tr = q.trace();
    if (tr > cut && tr > 0.0) s.sqrt_trace_total += std::sqrt(tr);
  }
  for (const auto& q : t.q_nu) {
    const double tr = q.trace();
    if (tr > cut && tr > 0.0) s.noise_only_trace += std::sqrt(tr);
  }
  return s;
}

/// Smallest k with ||Q*_{k+1} - Q*_k||_F <= eps ||Q*_k||_F, capped at 1e4.
/// The families are built with alpha = nu_bar = 1: a uniform scaling cancels
/// in the relative criterion, and the horizon stays independent of the
/// detector tuning. The geometric ratio max(rho(F+GK), rho(F)) gives an
/// a-priori tail bound used to fail fast when the cap cannot be met.
inline int settling_horizon(const PlantModel& m, const GainPair& g, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("settling_horizon: eps must be positive");
  constexpr int kCap = 10000;
  const auto st = check_gains(m, g);
  const double ratio = std::max(st.rho_control, spectral_radius(m.F));
  if (ratio >= 1.0 || !st.stable) {
    std::ostringstream os;
    os << "settling_horizon: geometric ratio " << ratio << " (rho(F+GK) = " << st.rho_control
       << ", rho(F) = " << spectral_radius(m.F) << ", rho(F-LC) = " << st.rho_observer
       << ") admits no settling";
    throw numerical_error(os.str());
  }
  auto rc = residual_covariance(m, g.L);
  const Eigen::Index n = m.n();
  const Eigen::MatrixXd lsl = symmetrize(g.L * rc.Sigma * g.L.transpose());
  const Eigen::MatrixXd fgk = m.F + m.G * g.K;

  std::vector<Eigen::MatrixXd> shapes;
  Eigen::MatrixXd fi = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd fgki = Eigen::MatrixXd::Identity(n, n);
  auto push_terms = [&]() {
    const Eigen::MatrixXd hi = fgki - fi;
    shapes.push_back(symmetrize(fi * m.R1 * fi.transpose()));
    shapes.push_back(symmetrize(hi * lsl * hi.transpose()));
    fi = m.F * fi;
    fgki = fgk * fgki;
  };
  push_terms();  // i = 0
  push_terms();  // i = 1
  Eigen::MatrixXd prev = min_trace_sum(shapes).shape;  // Q*_1
  for (int k = 1; k < kCap; ++k) {
    push_terms();  // i = k + 1
    const Eigen::MatrixXd cur = min_trace_sum(shapes).shape;
    if ((cur - prev).norm() <= eps * prev.norm()) return k;
    prev = cur;
  }
  std::ostringstream os;
  os << "settling_horizon: cap " << kCap << " reached (rho(F+GK) = " << st.rho_control
     << ", rho(F) = " << spectral_radius(m.F) << ", eps = " << eps << ")";
  throw numerical_error(os.str());
}

/// Exact boundary of the k-step reachable set, one point per direction. In 2D
/// the angular grid makes the output an ordered curve; above 2D the points
/// carry no ordering.
inline std::vector<Eigen::VectorXd> exact_reachable_boundary(
    const ReachabilityTerms& t, const std::vector<SupportDirection>& directions) {
  const auto shapes = detail::merged_shapes(t, t.horizon);
  std::vector<Eigen::VectorXd> pts;
  pts.reserve(directions.size());
  for (const auto& dir : directions) pts.push_back(minkowski_boundary_point(shapes, dir));
  return pts;
}

struct SimulationReport {
  long trials = 0;
  int steps = 0;
  double contained_fraction = 0.0;
  double max_quadratic_form = 0.0;
  long violations = 0;
};

/// Simulates the attacked closed loop under zero-alarm attacks:
///   e_{k+1} = F e_k - L Sigma^{1/2} dbar_k + nu_k
///   x_{k+1} = (F+GK) x_k - GK e_k + nu_k
/// with nu_k uniform in E(nu_bar R1) and ||dbar_k||^2 <= alpha, mixing random
/// boundary draws with greedy worst-case directions. Reports the fraction of
/// states x_k inside E(Q*_k) and the largest quadratic form seen. Trials are
/// independent work items keyed by (seed, trial).
inline SimulationReport simulate_attacked_trajectories(const PlantModel& m, const GainPair& g,
                                                       const DetectorConfig& det,
                                                       const NoiseTruncation& trunc, long trials,
                                                       int k, std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("simulate_attacked_trajectories: trials < 1");
  const auto terms = shape_term_sequences(m, g, det, trunc, k);
  const Eigen::Index n = m.n(), p = m.p();

  // Per-step bound factorizations for the quadratic-form check.
  struct Factor {
    Eigen::MatrixXd vecs;
    Eigen::VectorXd vals;
    double cut = 0.0;
  };
  std::vector<Factor> bounds(k + 1);
  for (int j = 1; j <= k; ++j) {
    const Ellipsoid q = min_trace_sum(detail::merged_shapes(terms, j));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(q.shape);
    bounds[j] = {es.eigenvectors(), es.eigenvalues(),
                 1e-12 * std::max(es.eigenvalues().maxCoeff(), 0.0)};
  }
  auto quad_form = [&](int j, const Eigen::VectorXd& x) {
    const auto& b = bounds[j];
    const Eigen::VectorXd y = b.vecs.transpose() * x;
    double q = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      if (b.vals(i) <= b.cut) {
        if (y(i) * y(i) > 1e-9 * std::max(b.vals.maxCoeff(), 1e-300))
          return std::numeric_limits<double>::infinity();
      } else {
        q += y(i) * y(i) / b.vals(i);
      }
    }
    return q;
  };

  const Eigen::MatrixXd r1_sqrt = symmetric_sqrt(m.R1);
  const Eigen::MatrixXd lss = g.L * terms.sigma_sqrt;           // attack-to-error injection
  const Eigen::MatrixXd greedy_map = (m.G * g.K * lss).transpose();  // p x n
  const Eigen::MatrixXd fgk = m.F + m.G * g.K;
  const Eigen::MatrixXd gk = m.G * g.K;
  const double sqrt_alpha = std::sqrt(det.alpha);
  const double sqrt_nu = std::sqrt(trunc.nu_bar);

  std::vector<unsigned char> ok(trials, 1);
  std::vector<double> maxq(trials, 0.0);
  parallel_for(trials, [&](std::int64_t trial) {
    rng::Stream stream(seed, static_cast<std::uint64_t>(trial));
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
    double worst = 0.0;
    bool inside = true;
    for (int j = 0; j < k; ++j) {
      const Eigen::VectorXd nu = sqrt_nu * (r1_sqrt * stream.in_ball(n));
      Eigen::VectorXd dbar;
      if (stream.next_u64() & 1ULL) {
        dbar = sqrt_alpha * stream.on_sphere(p);
      } else {
        // greedy: push the state along its current direction
        Eigen::VectorXd w = x.norm() > 1e-12 ? Eigen::VectorXd(x.normalized())
                                             : stream.on_sphere(n);
        Eigen::VectorXd d = greedy_map * w;
        dbar = d.norm() > 1e-12 ? Eigen::VectorXd(sqrt_alpha * d.normalized())
                                : Eigen::VectorXd(sqrt_alpha * stream.on_sphere(p));
      }
      const Eigen::VectorXd e_next = m.F * e - lss * dbar + nu;
      const Eigen::VectorXd x_next = fgk * x - gk * e + nu;
      x = x_next;
      e = e_next;
      const double q = quad_form(j + 1, x);
      worst = std::max(worst, q);
      if (!(q <= 1.0 + 1e-9)) inside = false;
    }
    ok[trial] = inside ? 1 : 0;
    maxq[trial] = worst;
  });

  SimulationReport rep;
  rep.trials = trials;
  rep.steps = k;
  long good = 0;
  for (long i = 0; i < trials; ++i) {
    good += ok[i];
    rep.max_quadratic_form = std::max(rep.max_quadratic_form, maxq[i]);
  }
  rep.violations = trials - good;
  rep.contained_fraction = static_cast<double>(good) / static_cast<double>(trials);
  return rep;
}

}  // namespace reachsec
