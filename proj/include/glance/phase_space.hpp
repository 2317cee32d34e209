#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <sstream>
#include <string>

#include "glance/errors.hpp"

namespace glance {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// A point (x, p) of T*R^n.
///
/// Space-time points (x, t, p, E) of T*R^{n+1} use the same type with n+1
/// slots: the last position slot holds t and the last momentum slot holds -E,
/// so that p dx - E dt is the ordinary Liouville form.
struct PhasePoint {
  Vec x;
  Vec p;

  PhasePoint() = default;
  PhasePoint(Vec x_, Vec p_) : x(std::move(x_)), p(std::move(p_)) {
    if (x.size() != p.size()) throw DomainError("PhasePoint: x and p must have equal length");
  }

  int dim() const { return static_cast<int>(x.size()); }

  bool finite() const { return x.allFinite() && p.allFinite(); }

  /// Stacked (x, p) vector of length 2n.
  Vec stacked() const {
    Vec z(2 * dim());
    z << x, p;
    return z;
  }

  static PhasePoint from_stacked(const Vec& z) {
    const auto n = z.size() / 2;
    return PhasePoint(z.head(n), z.segment(n, n));
  }

  double norm() const { return std::sqrt(x.squaredNorm() + p.squaredNorm()); }

  std::string str() const {
    std::ostringstream os;
    os << "(x=[" << x.transpose() << "], p=[" << p.transpose() << "])";
    return os.str();
  }
};

/// Symplectic product dp^dx of two stacked tangent vectors (dx, dp).
inline double symplectic_product(const Vec& u, const Vec& v) {
  const auto n = u.size() / 2;
  return u.tail(n).dot(v.head(n)) - u.head(n).dot(v.tail(n));
}

/// Matrix of the form above: symplectic_product(u, v) = u^T Omega v.
inline Mat symplectic_matrix(int n) {
  Mat omega = Mat::Zero(2 * n, 2 * n);
  omega.block(n, 0, n, n) = Mat::Identity(n, n);
  omega.block(0, n, n, n) = -Mat::Identity(n, n);
  return omega;
}

/// Central-difference step used for first derivatives.
inline double fd_step(double scale) { return 1e-6 * (1.0 + std::abs(scale)); }

/// Wider step for the outer layer of nested differences.
inline double fd_step_nested(double scale) { return 1e-4 * (1.0 + std::abs(scale)); }

}  // namespace glance
