#include <catch2/catch_amalgamated.hpp>

#include "reachsec/linalg.hpp"
#include "support/oracles.hpp"

using Eigen::MatrixXd;
using reachsec::rng::Stream;

TEST_CASE("stein solve matches the scalar closed form", "[linalg]") {
  const double a = 0.7, q = 0.3;
  MatrixXd am(1, 1), qm(1, 1);
  am << a;
  qm << q;
  const MatrixXd x = reachsec::stein_solve(am, qm);
  CHECK(x(0, 0) == Catch::Approx(q / (1.0 - a * a)).epsilon(1e-13));
}

TEST_CASE("stein solve agrees with fixed-point iteration", "[linalg]") {
  Stream s(7, 0);
  for (int rep = 0; rep < 5; ++rep) {
    const int n = 2 + rep % 3;
    MatrixXd a(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) a(i, j) = s.normal();
    a *= 0.6 / std::max(reachsec::spectral_radius(a), 1e-9);
    const MatrixXd q = oracles::random_pd(n, s);
    const MatrixXd x = reachsec::stein_solve(a, q);
    const MatrixXd x_it = oracles::stein_iterate(a, q, 2000);
    CHECK((x - x_it).norm() <= 1e-10 * x.norm());
    CHECK((a * x * a.transpose() + q - x).norm() <= 1e-12 * std::max(1.0, x.norm()));
  }
}

TEST_CASE("stein solve rejects unstable dynamics", "[linalg]") {
  MatrixXd a = 1.5 * MatrixXd::Identity(2, 2);
  CHECK_THROWS_AS(reachsec::stein_solve(a, MatrixXd::Identity(2, 2)),
                  reachsec::numerical_error);
}

TEST_CASE("symmetric sqrt reconstructs its square", "[linalg]") {
  Stream s(11, 0);
  const MatrixXd q = oracles::random_pd(4, s);
  const MatrixXd r = reachsec::symmetric_sqrt(q);
  CHECK((r * r - q).norm() <= 1e-12 * q.norm());
  CHECK((r - r.transpose()).norm() <= 1e-13 * r.norm());
}

TEST_CASE("psd floor lifts negative eigenvalues and reports them", "[linalg]") {
  MatrixXd s(2, 2);
  s << 1.0, 0.0, 0.0, -1e-4;
  const auto out = reachsec::psd_floor(s, 1e-8);
  CHECK(out.changed);
  CHECK(out.min_eigenvalue == Catch::Approx(-1e-4));
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(out.value);
  CHECK(es.eigenvalues().minCoeff() >= 0.0);

  const auto noop = reachsec::psd_floor(MatrixXd::Identity(2, 2), 1e-8);
  CHECK_FALSE(noop.changed);
}

TEST_CASE("kron follows the vec identity", "[linalg]") {
  Stream s(13, 0);
  MatrixXd a(2, 2), x(2, 2);
  for (int i = 0; i < 4; ++i) {
    a(i / 2, i % 2) = s.normal();
    x(i / 2, i % 2) = s.normal();
  }
  const MatrixXd axat = a * x * a.transpose();
  Eigen::VectorXd lhs = Eigen::Map<const Eigen::VectorXd>(axat.data(), 4);
  Eigen::VectorXd rhs =
      reachsec::kron(a, a) * Eigen::Map<const Eigen::VectorXd>(x.data(), 4);
  CHECK((lhs - rhs).norm() <= 1e-13);
}
