#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <sstream>
#include <stdexcept>
#include <string>

namespace reachsec {

/// Thrown when a computation fails numerically (instability, non-convergence,
/// singular data). Maps to exit code 2 in the CLI, as opposed to usage errors.
struct numerical_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) {
  return 0.5 * (m + m.transpose());
}

inline double spectral_radius(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(m, /*computeEigenvectors=*/false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/// Solves the Stein (discrete Lyapunov) equation X = A X A' + Q through the
/// vectorized linear system (I - A (x) A) vec X = vec Q. Exact for stable A;
/// the state dimensions here are small so the dense solve is cheap.
inline Eigen::MatrixXd stein_solve(const Eigen::MatrixXd& a, const Eigen::MatrixXd& q) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n || q.rows() != n || q.cols() != n)
    throw std::invalid_argument("stein_solve: dimension mismatch");
  const double rho = spectral_radius(a);
  if (rho >= 1.0) {
    std::ostringstream os;
    os << "stein_solve: spectral radius " << rho << " >= 1, no bounded solution";
    throw numerical_error(os.str());
  }
  Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(n * n, n * n) - kron(a, a);
  Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(q.data(), n * n);
  Eigen::VectorXd x = lhs.partialPivLu().solve(rhs);
  Eigen::MatrixXd sol = Eigen::Map<const Eigen::MatrixXd>(x.data(), n, n);
  const bool q_sym = (q - q.transpose()).cwiseAbs().maxCoeff() <=
                     1e-12 * std::max(1.0, q.cwiseAbs().maxCoeff());
  if (q_sym) sol = symmetrize(sol);
  const double scale = std::max(1.0, sol.norm());
  const double resid = (a * sol * a.transpose() + q - sol).norm();
  if (resid > 1e-10 * scale) {
    std::ostringstream os;
    os << "stein_solve: residual " << resid << " exceeds tolerance at scale " << scale;
    throw numerical_error(os.str());
  }
  return sol;
}

/// Symmetric PSD square root via eigendecomposition; tiny negative eigenvalues
/// from roundoff are clamped to zero.
inline Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& s) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(s));
  if (es.info() != Eigen::Success) throw numerical_error("symmetric_sqrt: eigensolver failed");
  Eigen::VectorXd w = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return symmetrize(es.eigenvectors() * w.asDiagonal() * es.eigenvectors().transpose());
}

struct PsdFloorResult {
  Eigen::MatrixXd value;
  double min_eigenvalue = 0.0;  // before flooring
  bool changed = false;
};

/// Floors the eigenvalues of a symmetric matrix at rel_floor * trace.
inline PsdFloorResult psd_floor(const Eigen::MatrixXd& s, double rel_floor) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(s));
  if (es.info() != Eigen::Success) throw numerical_error("psd_floor: eigensolver failed");
  PsdFloorResult out;
  out.min_eigenvalue = es.eigenvalues().minCoeff();
  const double floor = rel_floor * std::max(s.trace(), 0.0);
  if (out.min_eigenvalue >= floor) {
    out.value = symmetrize(s);
    return out;
  }
  Eigen::VectorXd w = es.eigenvalues().cwiseMax(floor);
  out.value = symmetrize(es.eigenvectors() * w.asDiagonal() * es.eigenvectors().transpose());
  out.changed = true;
  return out;
}

inline Eigen::Index matrix_rank(const Eigen::MatrixXd& m, double rel_tol = 1e-9) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const double smax = svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
  if (smax <= 0.0) return 0;
  return (svd.singularValues().array() > rel_tol * smax).count();
}

/// Single-entry matrix J with [J]_{ij} = 1 and the given dimensions.
inline Eigen::MatrixXd single_entry(Eigen::Index rows, Eigen::Index cols,
                                    Eigen::Index i, Eigen::Index j) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows, cols);
  out(i, j) = 1.0;
  return out;
}

}  // namespace reachsec
