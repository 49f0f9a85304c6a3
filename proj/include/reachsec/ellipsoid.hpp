#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

#include "reachsec/linalg.hpp"
#include "reachsec/rng.hpp"

namespace reachsec {

/// Relative trace threshold below which a member of a geometric sum is treated
/// as the zero ellipsoid and skipped: the minimum-trace weights
/// p*_{ij} = sqrt(tr Q_j / tr Q_i) are singular at zero trace, and a zero
/// ellipsoid contributes nothing to the sum.
inline constexpr double kTraceSkipRel = 1e-14;

/// Relative threshold on <l, Q l> below which a member is flat along l.
inline constexpr double kDirectionSkipRel = 1e-14;

/// E(Q, c) = { x : (x - c)' Q^{-1} (x - c) <= 1 }. The shape matrix Q is
/// symmetric PSD; degenerate (zero) ellipsoids are allowed.
struct Ellipsoid {
  Eigen::MatrixXd shape;
  Eigen::VectorXd center;

  Eigen::Index dim() const { return center.size(); }

  static Ellipsoid zero(Eigen::Index n) {
    return {Eigen::MatrixXd::Zero(n, n), Eigen::VectorXd::Zero(n)};
  }
};

/// Validates the type invariants (symmetry within 1e-12 relative, smallest
/// eigenvalue >= -1e-10 * trace) and returns a symmetrized ellipsoid.
inline Ellipsoid make_ellipsoid(const Eigen::MatrixXd& shape, const Eigen::VectorXd& center) {
  if (shape.rows() != shape.cols() || shape.rows() != center.size())
    throw std::invalid_argument("make_ellipsoid: dimension mismatch");
  const double scale = std::max(shape.cwiseAbs().maxCoeff(), 0.0);
  if ((shape - shape.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(scale, 1e-300))
    throw std::invalid_argument("make_ellipsoid: shape matrix is not symmetric");
  Eigen::MatrixXd sym = symmetrize(shape);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.eigenvalues().minCoeff() < -1e-10 * std::max(sym.trace(), 0.0) - 1e-300)
    throw std::invalid_argument("make_ellipsoid: shape matrix is not PSD within tolerance");
  return {std::move(sym), center};
}

/// Unit direction vector; the factory normalizes its argument.
struct SupportDirection {
  Eigen::VectorXd ell;

  static SupportDirection of(const Eigen::VectorXd& v) {
    const double n = v.norm();
    if (n < 1e-300) throw std::invalid_argument("SupportDirection: zero vector");
    return {v / n};
  }
  static SupportDirection angle2d(double theta) {
    Eigen::VectorXd v(2);
    v << std::cos(theta), std::sin(theta);
    return {v};
  }
};

/// Positive pair weights p_{ij} over I = {(i,j) | 1 <= i < j <= k}, stored
/// with zero-based indices.
using PairWeights = std::map<std::pair<int, int>, double>;

/// Support function of an ellipsoid: <l, Q l>^{1/2} + <l, c>. A degenerate
/// shape contributes only the center projection.
inline double support(const Ellipsoid& e, const SupportDirection& dir) {
  if (e.dim() != dir.ell.size()) throw std::invalid_argument("support: dimension mismatch");
  const double q = dir.ell.dot(e.shape * dir.ell);
  return std::sqrt(std::max(q, 0.0)) + dir.ell.dot(e.center);
}

/// Image of an ellipsoid under x -> A x: shape A Q A', center A c.
inline Ellipsoid linear_map(const Ellipsoid& e, const Eigen::MatrixXd& a) {
  if (a.cols() != e.dim()) throw std::invalid_argument("linear_map: dimension mismatch");
  return {symmetrize(a * e.shape * a.transpose()), a * e.center};
}

namespace detail {

inline double max_trace(const std::vector<Eigen::MatrixXd>& shapes) {
  double mx = 0.0;
  for (const auto& q : shapes) mx = std::max(mx, q.trace());
  return mx;
}

inline void check_shapes(const std::vector<Eigen::MatrixXd>& shapes) {
  if (shapes.empty()) throw std::invalid_argument("geometric sum: empty shape list");
  const Eigen::Index n = shapes.front().rows();
  for (const auto& q : shapes)
    if (q.rows() != n || q.cols() != n)
      throw std::invalid_argument("geometric sum: inconsistent shape dimensions");
}

}  // namespace detail

/// Boundary point of the geometric sum of centered ellipsoids in direction l:
/// x = sum_i <l, Q_i l>^{-1/2} Q_i l. With a unit l this realizes the support
/// function exactly; members degenerate along l contribute the zero vector.
inline Eigen::VectorXd minkowski_boundary_point(const std::vector<Eigen::MatrixXd>& shapes,
                                                const SupportDirection& dir) {
  detail::check_shapes(shapes);
  const Eigen::Index n = shapes.front().rows();
  if (dir.ell.size() != n)
    throw std::invalid_argument("minkowski_boundary_point: dimension mismatch");
  const double tr_cut = kTraceSkipRel * detail::max_trace(shapes);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  for (const auto& q : shapes) {
    const double tr = q.trace();
    if (tr <= tr_cut) continue;
    const Eigen::VectorXd ql = q * dir.ell;
    const double s = dir.ell.dot(ql);
    if (s <= kDirectionSkipRel * tr) continue;  // flat along this direction
    x += ql / std::sqrt(s);
  }
  return x;
}

/// Outer-bound family for the geometric sum:
/// Q = sum_i Q_i + sum_{(i,j) in I} (p_ij Q_i + p_ij^{-1} Q_j).
inline Ellipsoid outer_bound(const std::vector<Eigen::MatrixXd>& shapes,
                             const PairWeights& weights) {
  detail::check_shapes(shapes);
  const int k = static_cast<int>(shapes.size());
  const Eigen::Index n = shapes.front().rows();
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n, n);
  for (const auto& s : shapes) q += s;
  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j < k; ++j) {
      const auto it = weights.find({i, j});
      if (it == weights.end())
        throw std::invalid_argument("outer_bound: missing weight for pair");
      const double p = it->second;
      if (!(p > 0.0)) throw std::invalid_argument("outer_bound: nonpositive weight");
      q += p * shapes[i] + (1.0 / p) * shapes[j];
    }
  }
  return {symmetrize(q), Eigen::VectorXd::Zero(n)};
}

/// Minimum-trace tight outer bound of the geometric sum:
/// Q* = (sum_i sqrt(tr Q_i)) (sum_i Q_i / sqrt(tr Q_i)).
/// Equals the outer_bound family at p*_{ij} = sqrt(tr Q_j / tr Q_i).
inline Ellipsoid min_trace_sum(const std::vector<Eigen::MatrixXd>& shapes) {
  detail::check_shapes(shapes);
  const Eigen::Index n = shapes.front().rows();
  const double tr_cut = kTraceSkipRel * detail::max_trace(shapes);
  double s = 0.0;
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(n, n);
  for (const auto& q : shapes) {
    const double tr = q.trace();
    if (tr <= tr_cut || tr <= 0.0) continue;
    const double rt = std::sqrt(tr);
    s += rt;
    t += q / rt;
  }
  if (s == 0.0) return Ellipsoid::zero(n);
  return {symmetrize(s * t), Eigen::VectorXd::Zero(n)};
}

/// Classic direction-tight shape matrix:
/// Q = (sum_i <l,Q_i l>^{1/2}) (sum_i <l,Q_i l>^{-1/2} Q_i).
/// Tight at direction l; members degenerate along l are skipped like in
/// min_trace_sum.
inline Ellipsoid directional_sum(const std::vector<Eigen::MatrixXd>& shapes,
                                 const SupportDirection& dir) {
  detail::check_shapes(shapes);
  const Eigen::Index n = shapes.front().rows();
  if (dir.ell.size() != n) throw std::invalid_argument("directional_sum: dimension mismatch");
  const double tr_cut = kTraceSkipRel * detail::max_trace(shapes);
  double s = 0.0;
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(n, n);
  for (const auto& q : shapes) {
    const double tr = q.trace();
    if (tr <= tr_cut || tr <= 0.0) continue;
    const double proj = dir.ell.dot(q * dir.ell);
    if (proj <= kDirectionSkipRel * tr) continue;
    const double rp = std::sqrt(proj);
    s += rp;
    t += q / rp;
  }
  if (s == 0.0) return Ellipsoid::zero(n);
  return {symmetrize(s * t), Eigen::VectorXd::Zero(n)};
}

/// Quadratic-form membership with slack 1e-9. Near-singular shapes use the
/// eigendecomposition pseudo-inverse; components along null directions must
/// vanish within tolerance.
inline bool contains_point(const Ellipsoid& e, const Eigen::VectorXd& x) {
  if (x.size() != e.dim()) throw std::invalid_argument("contains_point: dimension mismatch");
  const Eigen::VectorXd d = x - e.center;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(e.shape);
  const Eigen::VectorXd w = es.eigenvalues();
  const Eigen::VectorXd y = es.eigenvectors().transpose() * d;
  const double wmax = std::max(w.maxCoeff(), 0.0);
  const double cut = 1e-12 * wmax;
  double qform = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (w(i) <= cut) {
      // null-space residual check: no extent in this direction
      if (y(i) * y(i) > 1e-9 * std::max(wmax, 1e-300)) return false;
    } else {
      qform += y(i) * y(i) / w(i);
    }
  }
  return qform <= 1.0 + 1e-9;
}

/// Deterministic direction grids: uniform angles in 2D, a golden-angle spiral
/// on S^2, and seeded Gaussian-normalized points above dimension three (the
/// seed makes property tests reproducible).
inline std::vector<SupportDirection> direction_grid(int dim, int count, std::uint64_t seed = 0) {
  if (dim < 1 || count < 1) throw std::invalid_argument("direction_grid: bad arguments");
  std::vector<SupportDirection> out;
  out.reserve(count);
  if (dim == 1) {
    for (int i = 0; i < count; ++i) {
      Eigen::VectorXd v(1);
      v << (i % 2 == 0 ? 1.0 : -1.0);
      out.push_back({v});
    }
  } else if (dim == 2) {
    for (int i = 0; i < count; ++i)
      out.push_back(SupportDirection::angle2d(2.0 * M_PI * i / count));
  } else if (dim == 3) {
    const double ga = M_PI * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < count; ++i) {
      const double z = 1.0 - 2.0 * (i + 0.5) / count;
      const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      Eigen::VectorXd v(3);
      v << r * std::cos(ga * i), r * std::sin(ga * i), z;
      out.push_back({v.normalized()});
    }
  } else {
    rng::Stream stream(seed, 0x6d69726b6f777377ULL);
    for (int i = 0; i < count; ++i) out.push_back({stream.on_sphere(dim)});
  }
  return out;
}

}  // namespace reachsec
