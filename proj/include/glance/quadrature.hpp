#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

#include "glance/errors.hpp"

namespace glance {

using cplx = std::complex<double>;
using RealFn = std::function<double(double)>;

// ---------------------------------------------------------------------------
// Cutoffs

/// Smooth step: 0 for s <= 0, 1 for s >= 1, built from exp(-1/s).
inline double smooth_step(double s) {
  if (s <= 0.0) return 0.0;
  if (s >= 1.0) return 1.0;
  const double a = std::exp(-1.0 / s), b = std::exp(-1.0 / (1.0 - s));
  return a / (a + b);
}

/// Theta_{t0}: equal to 1 on [0, t0], to 0 on [2 t0, inf), C-infinity in between.
inline double cutoff(double t, double t0) {
  if (t0 <= 0) throw DomainError("cutoff: t0 must be positive");
  return 1.0 - smooth_step((t - t0) / t0);
}

/// Smooth bump equal to 1 on [a + w, b - w] and vanishing outside (a, b).
inline double smooth_bump(double t, double a, double b, double w) {
  return smooth_step((t - a) / w) * smooth_step((b - t) / w);
}

// ---------------------------------------------------------------------------
// Oscillatory quadrature of int_a^b B(t) exp(i S(t) / h) dt

struct OscillatoryOptions {
  double rtol = 1e-10;
  double atol = 1e-14;
  int max_depth = 40;
  double filon_threshold = 20.0;  // Filon panels where |S'| / h > threshold
  int initial_panels = 16;
};

struct OscillatoryResult {
  cplx value;
  double error_estimate = 0.0;
  int panels = 0;
  int filon_panels = 0;
};

namespace detail {

inline cplx gk15(const std::function<cplx(double)>& f, double a, double b) {
  using GK = boost::math::quadrature::gauss_kronrod<double, 15>;
  const double re = GK::integrate([&](double t) { return f(t).real(); }, a, b, 0);
  const double im = GK::integrate([&](double t) { return f(t).imag(); }, a, b, 0);
  return {re, im};
}

// Filon-type panel: substitute u = S(t) (S monotone on the panel), interpolate
// g(u) = B(t(u)) / S'(t(u)) by a quadratic through three nodes and integrate
// the quadratic against exp(i u / h) exactly. Returns false when the panel is
// unsuitable (phase not monotone or too few oscillations for the moments).
inline bool filon_panel(const RealFn& B, const RealFn& S, const RealFn& dS, double a, double b, double h,
                        cplx& out) {
  const double m = 0.5 * (a + b);
  const double t[3] = {a, m, b};
  double u[3], g[3], d[3];
  for (int k = 0; k < 3; ++k) {
    d[k] = dS(t[k]);
    u[k] = S(t[k]);
  }
  if (!((d[0] > 0 && d[1] > 0 && d[2] > 0) || (d[0] < 0 && d[1] < 0 && d[2] < 0))) return false;
  for (int k = 0; k < 3; ++k) g[k] = B(t[k]) / d[k];
  const double c = 0.5 * (u[0] + u[2]), H = 0.5 * (u[2] - u[0]);
  const double w = 1.0 / h;
  const double th = w * std::abs(H);
  if (th < 1.0) return false;
  // quadratic g(v) = q0 + q1 v + q2 v^2 in v = u - c
  const double v0 = u[0] - c, v1 = u[1] - c, v2 = u[2] - c;
  const double den = (v0 - v1) * (v0 - v2) * (v1 - v2);
  if (den == 0.0) return false;
  const double q2 = (v2 * (g[1] - g[0]) + v1 * (g[0] - g[2]) + v0 * (g[2] - g[1])) / den;
  const double q1 = (v2 * v2 * (g[0] - g[1]) + v1 * v1 * (g[2] - g[0]) + v0 * v0 * (g[1] - g[2])) / den;
  const double q0 = (v1 * v2 * (v1 - v2) * g[0] + v2 * v0 * (v2 - v0) * g[1] + v0 * v1 * (v0 - v1) * g[2]) / den;
  // moments of v^j exp(i w v) over [-|H|, |H|]
  const double s = std::sin(th), co = std::cos(th);
  const double M0 = 2 * s / w;
  const cplx M1(0.0, 2 * (s - th * co) / (w * w));
  const double M2 = 2 * (th * th * s + 2 * th * co - 2 * s) / (w * w * w);
  cplx I = q0 * M0 + q1 * M1 + q2 * M2;
  // the u-orientation follows the sign of S'
  if (H < 0) I = -I;
  out = std::exp(cplx(0.0, w * c)) * I;
  return true;
}

struct OscillatoryWorker {
  const RealFn& B;
  const RealFn& S;
  const RealFn& dS;
  double h;
  const OscillatoryOptions& opt;
  double scale = 0.0;
  double length = 1.0;
  int panels = 0, filon = 0;
  double err = 0.0;

  cplx rule(double a, double b, bool& used_filon) {
    const double lim = opt.filon_threshold * h;
    used_filon = false;
    if (dS && std::abs(dS(a)) > lim && std::abs(dS(b)) > lim && std::abs(dS(0.5 * (a + b))) > lim) {
      cplx v;
      if (filon_panel(B, S, dS, a, b, h, v)) {
        used_filon = true;
        return v;
      }
    }
    return gk15([this](double t) { return B(t) * std::exp(cplx(0.0, S(t) / h)); }, a, b);
  }

  cplx run(double a, double b, cplx whole, bool whole_filon, int depth) {
    const double m = 0.5 * (a + b);
    bool fl, fr;
    const cplx l = rule(a, m, fl), r = rule(m, b, fr);
    const cplx both = l + r;
    const double diff = std::abs(both - whole);
    const double tol = std::max(opt.atol, opt.rtol * scale) * (b - a) / length;
    if (diff <= tol || depth >= opt.max_depth) {
      ++panels;
      if (fl || fr || whole_filon) ++filon;
      err += diff;
      return both;
    }
    return run(a, m, l, fl, depth + 1) + run(m, b, r, fr, depth + 1);
  }
};

}  // namespace detail

/// Adaptive quadrature of int_a^b B(t) exp(i S(t)/h) dt. Panels on which the
/// phase S/h turns faster than filon_threshold per unit t use a Filon-type rule in
/// the phase variable, the others Gauss-Kronrod (15 points).
inline OscillatoryResult oscillatory_integral(const RealFn& B, const RealFn& S, const RealFn& dS, double a, double b,
                                              double h, const OscillatoryOptions& opt = {}) {
  if (!(h > 0)) throw DomainError("oscillatory_integral: h must be positive");
  if (!(b > a)) throw DomainError("oscillatory_integral: empty interval");
  detail::OscillatoryWorker w{B, S, dS, h, opt};
  // scale for the relative tolerance: int |B|
  using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
  w.length = b - a;
  w.scale = GK::integrate([&](double t) { return std::abs(B(t)); }, a, b, 10, 1e-6);
  OscillatoryResult res;
  if (w.scale == 0.0) {
    res.value = 0.0;
    return res;
  }
  const int P = std::max(1, opt.initial_panels);
  for (int k = 0; k < P; ++k) {
    const double lo = a + (b - a) * k / P, hi = a + (b - a) * (k + 1) / P;
    bool f;
    const cplx whole = w.rule(lo, hi, f);
    res.value += w.run(lo, hi, whole, f, 0);
  }
  res.error_estimate = w.err;
  res.panels = w.panels;
  res.filon_panels = w.filon;
  return res;
}

// ---------------------------------------------------------------------------
// Stationary phase

struct StationaryPoint {
  double t = 0.0;
  double second_derivative = 0.0;
  cplx contribution;
};

struct StationaryPhaseResult {
  cplx value;
  std::vector<StationaryPoint> points;
  std::vector<std::string> warnings;
};

/// Roots of dS in (a, b) found by sign changes on a grid of `samples`
/// intervals, each refined by TOMS 748.
inline std::vector<double> find_roots(const RealFn& f, double a, double b, int samples = 400) {
  std::vector<double> out;
  double pa = a, fa = f(a);
  for (int k = 1; k <= samples; ++k) {
    const double s = a + (b - a) * k / samples, fs = f(s);
    if (fa == 0.0) {
      out.push_back(pa);
    } else if ((fa < 0) != (fs < 0) && fs != 0.0) {
      boost::uintmax_t it = 100;
      auto r = boost::math::tools::toms748_solve(f, pa, s, fa, fs, boost::math::tools::eps_tolerance<double>(50), it);
      out.push_back(0.5 * (r.first + r.second));
    }
    pa = s;
    fa = fs;
  }
  return out;
}

/// Leading stationary-phase term of int_a^b B exp(i S / h) dt from the
/// non-degenerate interior critical points of S. Points closer than sqrt(h)
/// to an end of the interval get a boundary-contamination warning.
inline StationaryPhaseResult stationary_phase(const RealFn& B, const RealFn& S, const RealFn& dS, const RealFn& d2S,
                                              double a, double b, double h) {
  StationaryPhaseResult res;
  for (double tc : find_roots(dS, a, b)) {
    const double s2 = d2S(tc);
    if (std::abs(s2) < 1e-10) {
      res.warnings.push_back("degenerate critical point at t = " + std::to_string(tc) + " skipped");
      continue;
    }
    if (tc - a < std::sqrt(h) || b - tc < std::sqrt(h))
      res.warnings.push_back("critical point at t = " + std::to_string(tc) +
                             " lies within sqrt(h) of the cutoff edge; boundary terms contaminate the comparison");
    StationaryPoint p;
    p.t = tc;
    p.second_derivative = s2;
    const double sg = s2 > 0 ? 1.0 : -1.0;
    p.contribution = B(tc) * std::sqrt(2 * std::numbers::pi * h / std::abs(s2)) *
                     std::exp(cplx(0.0, S(tc) / h + sg * std::numbers::pi / 4));
    res.value += p.contribution;
    res.points.push_back(p);
  }
  return res;
}

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw DomainError("loglog_slope: need at least two pairs");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace glance
