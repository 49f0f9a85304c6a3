#pragma once

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>
#include <complex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "reachsec/linalg.hpp"

namespace reachsec {

/// x_{k+1} = F x_k + G u_k + nu_k,  y_k = C x_k + eta_k,
/// nu ~ N(0, R1), eta ~ N(0, R2). R1/R2 are stored clamped (see load_model).
struct PlantModel {
  Eigen::MatrixXd F;   // n x n
  Eigen::MatrixXd G;   // n x m
  Eigen::MatrixXd C;   // p x n
  Eigen::MatrixXd R1;  // n x n process-noise covariance
  Eigen::MatrixXd R2;  // p x p sensor-noise covariance

  Eigen::Index n() const { return F.rows(); }
  Eigen::Index m() const { return G.cols(); }
  Eigen::Index p() const { return C.rows(); }
};

/// Observer gain L (n x p) and controller gain K (m x n).
struct GainPair {
  Eigen::MatrixXd L;
  Eigen::MatrixXd K;

  static GainPair zero(const PlantModel& m) {
    return {Eigen::MatrixXd::Zero(m.n(), m.p()), Eigen::MatrixXd::Zero(m.m(), m.n())};
  }
};

struct GainStability {
  double rho_observer = 0.0;  // spectral radius of F - L C
  double rho_control = 0.0;   // spectral radius of F + G K
  bool stable = false;
};

inline GainStability check_gains(const PlantModel& m, const GainPair& g) {
  if (g.L.rows() != m.n() || g.L.cols() != m.p() || g.K.rows() != m.m() || g.K.cols() != m.n())
    throw std::invalid_argument("check_gains: gain dimensions do not match the model");
  GainStability out;
  out.rho_observer = spectral_radius(m.F - g.L * m.C);
  out.rho_control = spectral_radius(m.F + m.G * g.K);
  out.stable = out.rho_observer < 1.0 && out.rho_control < 1.0;
  return out;
}

struct ModelDiagnostics {
  bool stable = false;
  bool detectable = false;
  bool stabilizable = false;
  bool covariances_ok = false;
  double rho_F = 0.0;
  double r1_min_eigenvalue = 0.0;
  double r2_min_eigenvalue = 0.0;
  // PBH ranks of [lambda I - F; C] and [lambda I - F, G] per eigenvalue of F.
  std::vector<Eigen::Index> pbh_detectability_ranks;
  std::vector<Eigen::Index> pbh_stabilizability_ranks;
  std::vector<std::string> warnings;

  bool pass() const { return stable && detectable && stabilizable && covariances_ok; }
};

// Covariances rounded for print can come out slightly indefinite; eigenvalues
// in [-kCovFatalRel*tr, 0) are floored to +kCovFloorRel*tr with a warning,
// anything below the fatal threshold fails validation.
inline constexpr double kCovFatalRel = 1e-2;
inline constexpr double kCovFloorRel = 1e-8;

namespace detail {

inline void check_model_dims(const PlantModel& m) {
  const auto n = m.F.rows();
  std::ostringstream os;
  if (m.F.cols() != n) os << "F must be square";
  else if (m.G.rows() != n) os << "G has " << m.G.rows() << " rows, expected " << n;
  else if (m.C.cols() != n) os << "C has " << m.C.cols() << " cols, expected " << n;
  else if (m.R1.rows() != n || m.R1.cols() != n)
    os << "R1 must be " << n << "x" << n;
  else if (m.R2.rows() != m.C.rows() || m.R2.cols() != m.C.rows())
    os << "R2 must be " << m.C.rows() << "x" << m.C.rows();
  else return;
  throw std::invalid_argument("model dimensions: " + os.str());
}

// PBH rank tests over the eigenvalues of F. Only modes on or outside the unit
// circle can break detectability/stabilizability.
inline void pbh_tests(const PlantModel& m, ModelDiagnostics& d) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(m.F);
  const auto eigs = es.eigenvalues();
  const Eigen::Index n = m.n();
  d.detectable = true;
  d.stabilizable = true;
  for (Eigen::Index i = 0; i < eigs.size(); ++i) {
    const std::complex<double> lam = eigs(i);
    Eigen::MatrixXcd top = lam * Eigen::MatrixXcd::Identity(n, n) - m.F.cast<std::complex<double>>();

    Eigen::MatrixXcd det_stack(n + m.p(), n);
    det_stack.topRows(n) = top;
    det_stack.bottomRows(m.p()) = m.C.cast<std::complex<double>>();
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd_d(det_stack);
    const double smax_d = svd_d.singularValues()(0);
    const Eigen::Index rank_d =
        smax_d > 0 ? (svd_d.singularValues().array() > 1e-9 * smax_d).count() : 0;
    d.pbh_detectability_ranks.push_back(rank_d);

    Eigen::MatrixXcd stab_stack(n, n + m.m());
    stab_stack.leftCols(n) = top;
    stab_stack.rightCols(m.m()) = m.G.cast<std::complex<double>>();
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd_s(stab_stack);
    const double smax_s = svd_s.singularValues()(0);
    const Eigen::Index rank_s =
        smax_s > 0 ? (svd_s.singularValues().array() > 1e-9 * smax_s).count() : 0;
    d.pbh_stabilizability_ranks.push_back(rank_s);

    if (std::abs(lam) >= 1.0 - 1e-12) {
      if (rank_d < n) d.detectable = false;
      if (rank_s < n) d.stabilizable = false;
    }
  }
}

}  // namespace detail

/// Pass/fail per model invariant plus spectral radius and PBH ranks. Does not
/// modify the model; instability and detectability failures are reported, not
/// silently fixed.
inline ModelDiagnostics validate_model(const PlantModel& m) {
  detail::check_model_dims(m);
  ModelDiagnostics d;
  d.rho_F = spectral_radius(m.F);
  d.stable = d.rho_F < 1.0;
  detail::pbh_tests(m, d);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e1(symmetrize(m.R1));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e2(symmetrize(m.R2));
  d.r1_min_eigenvalue = e1.eigenvalues().minCoeff();
  d.r2_min_eigenvalue = e2.eigenvalues().minCoeff();
  const bool r1_ok = d.r1_min_eigenvalue >= -kCovFatalRel * std::max(m.R1.trace(), 0.0);
  const bool r2_ok = d.r2_min_eigenvalue >= -kCovFatalRel * std::max(m.R2.trace(), 0.0);
  d.covariances_ok = r1_ok && r2_ok;
  if (!r1_ok) d.warnings.push_back("R1 is indefinite beyond tolerance");
  if (!r2_ok) d.warnings.push_back("R2 is indefinite beyond tolerance");
  return d;
}

/// Builds a model from raw matrices: checks dimensions (fatal), floors
/// near-PSD covariance eigenvalues with a recorded warning, and appends the
/// remaining diagnostics of validate_model.
inline PlantModel load_model(const Eigen::MatrixXd& F, const Eigen::MatrixXd& G,
                             const Eigen::MatrixXd& C, const Eigen::MatrixXd& R1,
                             const Eigen::MatrixXd& R2, ModelDiagnostics* diag_out = nullptr) {
  PlantModel raw{F, G, C, symmetrize(R1), symmetrize(R2)};
  detail::check_model_dims(raw);
  ModelDiagnostics diag = validate_model(raw);

  PlantModel out = raw;
  if (diag.covariances_ok) {
    auto f1 = psd_floor(raw.R1, kCovFloorRel);
    auto f2 = psd_floor(raw.R2, kCovFloorRel);
    out.R1 = f1.value;
    out.R2 = f2.value;
    auto note = [&](const char* name, const PsdFloorResult& r, const Eigen::MatrixXd& cov) {
      if (!r.changed) return;
      std::ostringstream os;
      os << name << ": eigenvalue " << r.min_eigenvalue << " floored to "
         << kCovFloorRel * std::max(cov.trace(), 0.0);
      diag.warnings.push_back(os.str());
    };
    note("R1", f1, out.R1);
    note("R2", f2, out.R2);
  }
  if (diag_out) *diag_out = diag;
  return out;
}

/// Chi-squared quantile: the m with Pr(chi2_dof <= m) = prob, via the inverse
/// regularized lower incomplete gamma function.
inline double chi2_quantile(int dof, double prob) {
  if (dof < 1) throw std::invalid_argument("chi2_quantile: dof must be positive");
  if (prob < 0.0 || prob >= 1.0)
    throw std::invalid_argument("chi2_quantile: prob must lie in [0, 1)");
  if (prob == 0.0) return 0.0;
  boost::math::chi_squared_distribution<double> dist(dof);
  return boost::math::quantile(dist, prob);
}

/// Chi-squared detector threshold alpha for a given false alarm rate; the
/// statistic z = r' Sigma^{-1} r has p degrees of freedom.
struct DetectorConfig {
  double false_alarm_rate = 0.05;
  double alpha = 0.0;
  int p = 0;

  static DetectorConfig from_rate(int p, double false_alarm_rate) {
    if (false_alarm_rate <= 0.0 || false_alarm_rate > 1.0)
      throw std::invalid_argument("DetectorConfig: false alarm rate must lie in (0, 1]");
    DetectorConfig d;
    d.false_alarm_rate = false_alarm_rate;
    d.p = p;
    d.alpha = chi2_quantile(p, 1.0 - false_alarm_rate);
    return d;
  }
};

/// Mahalanobis truncation radii: Pr(nu' R1^{-1} nu <= nu_bar) = p_bar and
/// likewise for eta. eta_bar has no downstream consumer (the zero-alarm attack
/// cancels eta) but is kept for completeness.
struct NoiseTruncation {
  double p_bar = 0.95;
  double nu_bar = 0.0;
  double eta_bar = 0.0;

  static NoiseTruncation from_p_bar(int n, int p, double p_bar) {
    NoiseTruncation t;
    t.p_bar = p_bar;
    t.nu_bar = chi2_quantile(n, p_bar);
    t.eta_bar = chi2_quantile(p, p_bar);
    return t;
  }
};

/// Steady-state estimation-error covariance:
/// P_e = (F - LC) P_e (F - LC)' + L R2 L' + R1.
inline Eigen::MatrixXd estimation_error_covariance(const PlantModel& m, const Eigen::MatrixXd& L) {
  const Eigen::MatrixXd flc = m.F - L * m.C;
  const double rho = spectral_radius(flc);
  if (rho >= 1.0) {
    std::ostringstream os;
    os << "estimation_error_covariance: rho(F - LC) = " << rho << " >= 1";
    throw numerical_error(os.str());
  }
  return stein_solve(flc, symmetrize(L * m.R2 * L.transpose() + m.R1));
}

struct ResidualCovariance {
  Eigen::MatrixXd P_e;
  Eigen::MatrixXd Sigma;       // C P_e C' + R2
  Eigen::MatrixXd Sigma_sqrt;  // symmetric PSD square root
};

inline ResidualCovariance residual_covariance(const PlantModel& m, const Eigen::MatrixXd& L) {
  ResidualCovariance out;
  out.P_e = estimation_error_covariance(m, L);
  out.Sigma = symmetrize(m.C * out.P_e * m.C.transpose() + m.R2);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(out.Sigma);
  if (es.eigenvalues().minCoeff() <= 0.0)
    throw numerical_error("residual_covariance: Sigma is not positive definite");
  out.Sigma_sqrt = symmetric_sqrt(out.Sigma);
  return out;
}

/// Stacked no-attack realization over xi = [x; e]:
///   A = [F+GK, -GK; 0, F-LC],  B = [I, 0; I, -L],
///   R = B diag(R1, R2) B' = [R1, R1; R1, R1 + L R2 L'].
struct ClosedLoopRealization {
  Eigen::MatrixXd A;  // 2n x 2n
  Eigen::MatrixXd B;  // 2n x (n+p)
  Eigen::MatrixXd R;  // 2n x 2n stacked noise covariance
  Eigen::MatrixXd P_e;
  Eigen::MatrixXd Sigma;
  Eigen::MatrixXd Sigma_sqrt;
};

inline ClosedLoopRealization assemble_closed_loop(const PlantModel& m, const GainPair& g) {
  const auto st = check_gains(m, g);
  if (!st.stable) {
    std::ostringstream os;
    os << "assemble_closed_loop: unstable gains (rho(F+GK) = " << st.rho_control
       << ", rho(F-LC) = " << st.rho_observer << ")";
    throw numerical_error(os.str());
  }
  const Eigen::Index n = m.n(), p = m.p();
  ClosedLoopRealization cl;
  cl.A = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  cl.A.topLeftCorner(n, n) = m.F + m.G * g.K;
  cl.A.topRightCorner(n, n) = -m.G * g.K;
  cl.A.bottomRightCorner(n, n) = m.F - g.L * m.C;
  cl.B = Eigen::MatrixXd::Zero(2 * n, n + p);
  cl.B.topLeftCorner(n, n) = Eigen::MatrixXd::Identity(n, n);
  cl.B.bottomLeftCorner(n, n) = Eigen::MatrixXd::Identity(n, n);
  cl.B.bottomRightCorner(n, p) = -g.L;
  cl.R = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  cl.R.topLeftCorner(n, n) = m.R1;
  cl.R.topRightCorner(n, n) = m.R1;
  cl.R.bottomLeftCorner(n, n) = m.R1;
  cl.R.bottomRightCorner(n, n) = symmetrize(m.R1 + g.L * m.R2 * g.L.transpose());
  auto rc = residual_covariance(m, g.L);
  cl.P_e = rc.P_e;
  cl.Sigma = rc.Sigma;
  cl.Sigma_sqrt = rc.Sigma_sqrt;
  return cl;
}

}  // namespace reachsec
