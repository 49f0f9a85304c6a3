#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>

namespace reachsec::rng {

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Deterministic random stream keyed by (seed, stream_id). Work items draw
/// from their own stream, so results do not depend on execution order or
/// worker count.
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t stream_id) {
    state_ = seed;
    std::uint64_t a = splitmix64_next(state_);
    state_ ^= (stream_id + 0x632be59bd9b4e019ULL) * 0xff51afd7ed558ccdULL;
    std::uint64_t b = splitmix64_next(state_);
    state_ = a ^ (b + 0x9e3779b97f4a7c15ULL);
    splitmix64_next(state_);
  }

  std::uint64_t next_u64() { return splitmix64_next(state_); }

  double uniform01() { return (next_u64() >> 11) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    if (u1 < 1e-300) u1 = 1e-300;
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * M_PI * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  Eigen::VectorXd gaussian(int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = normal();
    return v;
  }

  Eigen::VectorXd on_sphere(int n) {
    Eigen::VectorXd v = gaussian(n);
    double nv = v.norm();
    while (nv < 1e-12) {
      v = gaussian(n);
      nv = v.norm();
    }
    return v / nv;
  }

  /// Uniform in the unit ball by radial scaling of a sphere draw.
  Eigen::VectorXd in_ball(int n) {
    const double r = std::pow(uniform01(), 1.0 / n);
    return r * on_sphere(n);
  }

 private:
  std::uint64_t state_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace reachsec::rng
