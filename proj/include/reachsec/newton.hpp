#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>

namespace reachsec {

struct NewtonOptions {
  int max_iter = 150;
  double tol_inf = 1e-8;   // convergence on the residual infinity norm
  double fd_step = 1e-7;   // relative forward-difference step for the Jacobian
  double mu0 = 1e-4;       // initial Levenberg damping
  double mu_max = 1e10;
};

struct NewtonResult {
  Eigen::VectorXd x;
  double residual_inf = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

struct BfgsOptions {
  int max_iter = 300;
  double grad_tol = 1e-10;  // on the gradient infinity norm
  int line_search_tries = 40;
};

/// Dense BFGS minimization with Armijo backtracking for smooth merit
/// functions. The callback returns the value and fills the gradient, or
/// returns +inf for infeasible points. Used to carry Newton starts into the
/// basin of a stationary point before the root polish: quasi-Newton steps on
/// analytic gradients are immune to the finite-difference Jacobian noise that
/// stalls pure root-finding in thin curved valleys.
template <typename ValueGradFn>
Eigen::VectorXd bfgs_minimize(ValueGradFn&& fn, Eigen::VectorXd x, const BfgsOptions& opt) {
  const int dim = static_cast<int>(x.size());
  Eigen::VectorXd grad(dim);
  double value = fn(x, grad);
  if (!std::isfinite(value)) return x;
  Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(dim, dim);
  Eigen::VectorXd grad_new(dim);

  for (int iter = 0; iter < opt.max_iter; ++iter) {
    if (grad.lpNorm<Eigen::Infinity>() <= opt.grad_tol) break;
    Eigen::VectorXd dir = -(hinv * grad);
    double slope = grad.dot(dir);
    if (slope >= 0.0) {  // reset a corrupted approximation
      hinv.setIdentity();
      dir = -grad;
      slope = grad.dot(dir);
    }
    double t = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < opt.line_search_tries; ++ls) {
      const Eigen::VectorXd x_new = x + t * dir;
      const double v_new = fn(x_new, grad_new);
      if (std::isfinite(v_new) && v_new <= value + 1e-4 * t * slope) {
        const Eigen::VectorXd s = x_new - x;
        const Eigen::VectorXd y = grad_new - grad;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
          const Eigen::VectorXd hy = hinv * y;
          const double yhy = y.dot(hy);
          hinv += ((sy + yhy) / (sy * sy)) * (s * s.transpose()) -
                  (hy * s.transpose() + s * hy.transpose()) / sy;
        }
        x = x_new;
        value = v_new;
        grad = grad_new;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;
  }
  return x;
}

/// Damped Newton (Levenberg-style trust region) for small dense square
/// systems. The residual callback returns false when x is infeasible
/// (e.g. destabilizing gains); infeasible steps are rejected and the damping
/// increased. The Jacobian is formed by forward differences on the residuals.
template <typename ResidualFn>
NewtonResult damped_newton(ResidualFn&& fn, Eigen::VectorXd x0, const NewtonOptions& opt) {
  NewtonResult best;
  Eigen::VectorXd r;
  if (!fn(x0, r)) return best;  // infeasible start
  Eigen::VectorXd x = x0;
  best.x = x;
  best.residual_inf = r.lpNorm<Eigen::Infinity>();

  const int dim = static_cast<int>(x.size());
  const int m = static_cast<int>(r.size());
  double mu = opt.mu0;
  Eigen::MatrixXd jac(m, dim);
  Eigen::VectorXd r_pert;

  for (int iter = 0; iter < opt.max_iter; ++iter) {
    best.iterations = iter;
    if (r.lpNorm<Eigen::Infinity>() <= opt.tol_inf) {
      best.x = x;
      best.residual_inf = r.lpNorm<Eigen::Infinity>();
      best.converged = true;
      return best;
    }
    for (int i = 0; i < dim; ++i) {
      const double h = opt.fd_step * std::max(1.0, std::abs(x(i)));
      Eigen::VectorXd xf = x;
      xf(i) += h;
      if (fn(xf, r_pert)) {
        jac.col(i) = (r_pert - r) / h;
      } else {
        xf(i) = x(i) - h;  // fall back to a backward difference
        if (fn(xf, r_pert))
          jac.col(i) = (r - r_pert) / h;
        else
          jac.col(i).setZero();
      }
    }
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd jtr = jac.transpose() * r;
    const double rn2 = r.squaredNorm();
    bool accepted = false;
    for (int attempt = 0; attempt < 30 && !accepted; ++attempt) {
      Eigen::MatrixXd lhs = jtj;
      lhs.diagonal().array() += mu * (jtj.diagonal().array().abs() + 1e-12);
      const Eigen::VectorXd step = lhs.ldlt().solve(-jtr);
      if (!step.allFinite()) {
        mu *= 4.0;
        continue;
      }
      const Eigen::VectorXd x_new = x + step;
      if (fn(x_new, r_pert) && r_pert.squaredNorm() < rn2) {
        x = x_new;
        r = r_pert;
        mu = std::max(mu / 3.0, 1e-12);
        accepted = true;
      } else {
        mu *= 4.0;
        if (mu > opt.mu_max) break;
      }
    }
    if (r.lpNorm<Eigen::Infinity>() < best.residual_inf) {
      best.x = x;
      best.residual_inf = r.lpNorm<Eigen::Infinity>();
    }
    if (!accepted) return best;  // stalled
  }
  if (r.lpNorm<Eigen::Infinity>() <= opt.tol_inf) {
    best.x = x;
    best.residual_inf = r.lpNorm<Eigen::Infinity>();
    best.converged = true;
  }
  return best;
}

}  // namespace reachsec
