#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "glance/errors.hpp"
#include "glance/phase_space.hpp"

namespace glance {

/// dy/dt = f(t, y), written into `dydt`.
using OdeRhs = std::function<void(double t, const Vec& y, Vec& dydt)>;

struct IntegrationOptions {
  double rtol = 1e-10;
  double atol = 1e-10;
  double initial_step = 0.0;  // 0 = automatic
  double min_step = 1e-14;
  long max_steps = 2'000'000;
};

namespace detail {

// Dormand-Prince 5(4) tableau.
struct Dopri5 {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                          a76 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;
  static constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                          d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                          d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;
};

struct StageResult {
  Vec y1;
  Vec k1, k3, k4, k5, k6, k7;
};

// One DOPRI5 step of size h from (t, y) with k1 = f(t, y) supplied.
inline StageResult dopri_step(const OdeRhs& f, double t, const Vec& y, const Vec& k1, double h) {
  using D = Dopri5;
  const auto n = y.size();
  StageResult s;
  s.k1 = k1;
  Vec k2(n), tmp(n);
  s.k3.resize(n);
  s.k4.resize(n);
  s.k5.resize(n);
  s.k6.resize(n);
  s.k7.resize(n);
  tmp = y + h * D::a21 * k1;
  f(t + D::c2 * h, tmp, k2);
  tmp = y + h * (D::a31 * k1 + D::a32 * k2);
  f(t + D::c3 * h, tmp, s.k3);
  tmp = y + h * (D::a41 * k1 + D::a42 * k2 + D::a43 * s.k3);
  f(t + D::c4 * h, tmp, s.k4);
  tmp = y + h * (D::a51 * k1 + D::a52 * k2 + D::a53 * s.k3 + D::a54 * s.k4);
  f(t + D::c5 * h, tmp, s.k5);
  tmp = y + h * (D::a61 * k1 + D::a62 * k2 + D::a63 * s.k3 + D::a64 * s.k4 + D::a65 * s.k5);
  f(t + h, tmp, s.k6);
  s.y1 = y + h * (D::a71 * k1 + D::a73 * s.k3 + D::a74 * s.k4 + D::a75 * s.k5 + D::a76 * s.k6);
  f(t + h, s.y1, s.k7);
  return s;
}

}  // namespace detail

/// Piecewise dense output of an accepted DOPRI5 step sequence.
class DenseTrajectory {
 public:
  struct Segment {
    double t0, h;
    Vec r1, r2, r3, r4, r5;  // continuous extension coefficients
  };

  double t_begin() const { return t_begin_; }
  double t_end() const { return t_end_; }
  const Vec& final_state() const { return y_end_; }
  std::size_t steps() const { return segments_.size(); }
  const std::vector<Segment>& segments() const { return segments_; }

  /// Smallest accepted step (absolute value).
  double min_step() const {
    double m = std::abs(t_end_ - t_begin_);
    for (const auto& s : segments_) m = std::min(m, std::abs(s.h));
    return m;
  }

  Vec at(double t) const {
    if (segments_.empty()) return y_end_;
    const double lo = std::min(t_begin_, t_end_), hi = std::max(t_begin_, t_end_);
    if (t < lo - 1e-12 * (1 + std::abs(lo)) || t > hi + 1e-12 * (1 + std::abs(hi)))
      throw DomainError("dense output requested outside the integrated interval");
    if (t == t_end_) return y_end_;
    // segments are ordered in the direction of integration
    const bool forward = t_end_ >= t_begin_;
    auto it = std::upper_bound(segments_.begin(), segments_.end(), t, [forward](double v, const Segment& s) {
      return forward ? v < s.t0 : v > s.t0;
    });
    if (it != segments_.begin()) --it;
    const Segment& s = *it;
    const double th = (t - s.t0) / s.h, th1 = 1.0 - th;
    return s.r1 + th * (s.r2 + th1 * (s.r3 + th * (s.r4 + th1 * s.r5)));
  }

 private:
  friend DenseTrajectory integrate_adaptive(const OdeRhs&, double, const Vec&, double, const IntegrationOptions&);
  double t_begin_ = 0, t_end_ = 0;
  Vec y_end_;
  std::vector<Segment> segments_;
};

/// Adaptive DOPRI5 with dense output from t0 to t1 (either direction).
inline DenseTrajectory integrate_adaptive(const OdeRhs& f, double t0, const Vec& y0, double t1,
                                          const IntegrationOptions& opt = {}) {
  using D = detail::Dopri5;
  DenseTrajectory traj;
  traj.t_begin_ = t0;
  traj.t_end_ = t1;
  traj.y_end_ = y0;
  if (t1 == t0) return traj;
  const double dir = t1 > t0 ? 1.0 : -1.0;
  const double span = std::abs(t1 - t0);
  const auto n = y0.size();

  Vec y = y0, k1(n);
  double t = t0;
  f(t, y, k1);
  if (!k1.allFinite()) throw IntegrationError("non-finite vector field at start", t0);

  auto scale = [&](const Vec& a, const Vec& b) {
    return (opt.atol + opt.rtol * a.cwiseAbs().cwiseMax(b.cwiseAbs()).array()).matrix();
  };
  double h = opt.initial_step;
  if (h <= 0) {
    const Vec sc = scale(y, y);
    const double d0 = (y.array() / sc.array()).matrix().norm() / std::sqrt(double(n));
    const double d1 = (k1.array() / sc.array()).matrix().norm() / std::sqrt(double(n));
    h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h = std::min(h, span);
  }
  h = std::min(h, span);

  long count = 0;
  while (dir * (t1 - t) > 0) {
    if (++count > opt.max_steps) throw IntegrationError("step budget exhausted", t);
    if (h < opt.min_step * std::max(1.0, std::abs(t)))
      throw IntegrationError("step size underflow", t);
    if (dir * (t + dir * h - t1) > 0) h = std::abs(t1 - t);
    const double hs = dir * h;
    auto st = detail::dopri_step(f, t, y, k1, hs);
    Vec err = hs * (D::e1 * k1 + D::e3 * st.k3 + D::e4 * st.k4 + D::e5 * st.k5 + D::e6 * st.k6 + D::e7 * st.k7);
    const Vec sc = scale(y, st.y1);
    double e = (err.array() / sc.array()).matrix().norm() / std::sqrt(double(n));
    if (!std::isfinite(e) || !st.y1.allFinite()) {
      h *= 0.2;
      continue;
    }
    if (e <= 1.0) {
      DenseTrajectory::Segment seg;
      seg.t0 = t;
      seg.h = hs;
      seg.r1 = y;
      seg.r2 = st.y1 - y;
      seg.r3 = hs * k1 - seg.r2;
      seg.r4 = seg.r2 - hs * st.k7 - seg.r3;
      seg.r5 = hs * (D::d1 * k1 + D::d3 * st.k3 + D::d4 * st.k4 + D::d5 * st.k5 + D::d6 * st.k6 + D::d7 * st.k7);
      traj.segments_.push_back(std::move(seg));
      t = (dir * (t + hs - t1) >= 0 || std::abs(t + hs - t1) < 1e-15 * (1 + std::abs(t1))) ? t1 : t + hs;
      y = st.y1;
      k1 = st.k7;
      const double fac = e == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(e, -0.2), 0.2, 5.0);
      h *= fac;
    } else {
      h *= std::max(0.2, 0.9 * std::pow(e, -0.2));
    }
  }
  traj.y_end_ = y;
  return traj;
}

/// Fixed-step fifth-order Dormand-Prince integration with `steps` equal steps.
/// The result is a smooth function of (y0, t1) because the step sequence does
/// not depend on the data, which keeps finite differences of flow maps clean.
inline Vec integrate_fixed(const OdeRhs& f, double t0, const Vec& y0, double t1, int steps) {
  if (steps < 1) throw DomainError("integrate_fixed needs at least one step");
  if (t1 == t0) return y0;
  const double h = (t1 - t0) / steps;
  Vec y = y0, k1(y0.size());
  double t = t0;
  for (int i = 0; i < steps; ++i) {
    f(t, y, k1);
    y = detail::dopri_step(f, t, y, k1, h).y1;
    t = t0 + (i + 1) * h;
    if (!y.allFinite()) throw IntegrationError("fixed-step integration blew up", t - h);
  }
  return y;
}

}  // namespace glance
