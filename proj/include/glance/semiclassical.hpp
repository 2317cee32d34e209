#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "glance/errors.hpp"
#include "glance/genfam.hpp"
#include "glance/hamiltonians.hpp"
#include "glance/manifolds.hpp"
#include "glance/phase_space.hpp"
#include "glance/polynomial.hpp"
#include "glance/quadrature.hpp"

namespace glance {

// ---------------------------------------------------------------------------
// Bessel source and the exact Helmholtz solution

inline double bessel_j0(double r) { return std::cyl_bessel_j(0.0, r); }
inline double bessel_j1(double r) { return std::cyl_bessel_j(1.0, r); }

/// f_h(x) = (2 pi / h)^{1/2} J_0(|x - a| / h); a defaults to the origin.
inline double bessel_source(const Vec& x, double h, const Vec& a = Vec()) {
  if (!(h > 0)) throw DomainError("bessel_source: h must be positive");
  const double r = a.size() ? (x - a).norm() : x.norm();
  return std::sqrt(2 * std::numbers::pi / h) * bessel_j0(r / h);
}

/// J_0(|x - a| / h) without the prefactor.
inline double bessel_profile(const Vec& x, double h, const Vec& a = Vec()) {
  if (!(h > 0)) throw DomainError("bessel_profile: h must be positive");
  const double r = a.size() ? (x - a).norm() : x.norm();
  return bessel_j0(r / h);
}

/// u_h(x, 1) = -J_1(|x| / h) |x| / (2 h).
inline double exact_u1(const Vec& x, double h) {
  if (!(h > 0)) throw DomainError("exact_u1: h must be positive");
  const double r = x.norm();
  return -bessel_j1(r / h) * r / (2 * h);
}

/// Five-point Laplacian of f at x in the plane with step delta.
inline double five_point_laplacian(const std::function<double(const Vec&)>& f, const Vec& x, double delta) {
  if (x.size() != 2) throw DomainError("five_point_laplacian works in the plane");
  const double c = f(x);
  double s = -4 * c;
  for (int i = 0; i < 2; ++i) {
    Vec a = x, b = x;
    a[i] += delta;
    b[i] -= delta;
    s += f(a) + f(b);
  }
  return s / (delta * delta);
}

/// (-h^2 Delta_delta - 1) exact_u1 - J_0(|x| / h).
inline double helmholtz_residual(const Vec& x, double h, double delta) {
  auto u = [h](const Vec& y) { return exact_u1(y, h); };
  return -h * h * five_point_laplacian(u, x, delta) - u(x) - bessel_profile(x, h);
}

/// 50 sample points along a spiral with radii in [0.05, 2].
inline std::vector<Vec> radial_sample_points(int count = 50, double r_min = 0.05, double r_max = 2.0) {
  std::vector<Vec> pts;
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int k = 0; k < count; ++k) {
    const double r = r_min + (r_max - r_min) * k / std::max(1, count - 1);
    pts.push_back(Eigen::Vector2d(r * std::cos(golden * k), r * std::sin(golden * k)));
  }
  return pts;
}

struct HelmholtzCheck {
  double h = 0.0;
  double delta_coarse = 0.0, delta_fine = 0.0;
  double rms_coarse = 0.0, rms_fine = 0.0;
  double ratio = 0.0;             // rms_coarse / rms_fine, 4 for a second-order error
  double rms_extrapolated = 0.0;  // Richardson combination (4 fine - coarse) / 3
  double normalization = 0.0;     // (-h^2 Delta - 1) u measured against f_h
  double normalization_expected = 0.0;  // (h / 2 pi)^{1/2}
};

inline HelmholtzCheck helmholtz_check(double h = 0.1, double delta_coarse = 1e-3, double delta_fine = 5e-4,
                                      const std::vector<Vec>& points = radial_sample_points()) {
  HelmholtzCheck c;
  c.h = h;
  c.delta_coarse = delta_coarse;
  c.delta_fine = delta_fine;
  double sc = 0, sf = 0, se = 0, num = 0, den = 0;
  for (const Vec& x : points) {
    const double rc = helmholtz_residual(x, h, delta_coarse), rf = helmholtz_residual(x, h, delta_fine);
    sc += rc * rc;
    sf += rf * rf;
    const double ex = (4 * rf - rc) / 3;
    se += ex * ex;
    // least squares for (-h^2 Delta - 1) u = C f_h using the extrapolated operator
    const double lhs = ex + bessel_profile(x, h);
    const double fh = bessel_source(x, h);
    num += lhs * fh;
    den += fh * fh;
  }
  const double n = static_cast<double>(points.size());
  c.rms_coarse = std::sqrt(sc / n);
  c.rms_fine = std::sqrt(sf / n);
  c.rms_extrapolated = std::sqrt(se / n);
  c.ratio = c.rms_coarse / c.rms_fine;
  c.normalization = num / den;
  c.normalization_expected = std::sqrt(h / (2 * std::numbers::pi));
  return c;
}

// ---------------------------------------------------------------------------
// Model pair

/// Profile f_1(xi', s) on R^n, xi' in R^{n-1}.
using ModelProfile = std::function<double(const Vec& xi_prime, double s)>;

inline ModelProfile gaussian_profile() {
  return [](const Vec& xp, double s) { return std::exp(-0.5 * (xp.squaredNorm() + s * s)); };
}

/// v_h(x, t) = f_h(x', x_n - t) for f_h(x) = f_1(x / h).
inline double model_v(const ModelProfile& f1, const Vec& x, double t, double h) {
  const auto n = x.size();
  return f1(x.head(n - 1) / h, (x[n - 1] - t) / h);
}

/// (i/h) int_0^inf Theta_{t0}(t) f_1(x'/h, (x_n - t)/h) dt, valid for x_n <= t0 / 2.
inline cplx model_pair_integral(const ModelProfile& f1, const Vec& x, double h, double t0) {
  if (!(h > 0)) throw DomainError("model_pair_integral: h must be positive");
  const auto n = x.size();
  if (x[n - 1] > t0 / 2)
    throw ValidityDomainError("model_pair_integral: x_n = " + std::to_string(x[n - 1]) + " exceeds t0/2 = " +
                              std::to_string(t0 / 2));
  const Vec xp = x.head(n - 1) / h;
  const double xn = x[n - 1];
  // s = t / h; the profile varies on the unit scale in s
  auto g = [&](double s) { return cutoff(h * s, t0) * f1(xp, xn / h - s); };
  using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
  const double S = 2 * t0 / h;
  const int panels = static_cast<int>(std::ceil(S / 2.0));
  double total = 0.0;
  for (int k = 0; k < panels; ++k) {
    const double a = S * k / panels, b = S * (k + 1) / panels;
    total += GK::integrate(g, a, b, 8, 1e-15);
  }
  return cplx(0.0, total);
}

/// i int_{-inf}^{x_n / h} f_1(x'/h, s) ds for the Gaussian profile.
inline cplx gaussian_model_closed_form(const Vec& x, double h) {
  const auto n = x.size();
  const double xp2 = x.head(n - 1).squaredNorm() / (h * h);
  const double val = std::exp(-0.5 * xp2) * std::sqrt(std::numbers::pi / 2) * std::erfc(-x[n - 1] / (h * std::sqrt(2.0)));
  return cplx(0.0, val);
}

// ---------------------------------------------------------------------------
// Time integral

struct TimeIntegralResult {
  cplx value;
  std::optional<cplx> stationary_phase;
  std::vector<std::string> warnings;
  int panels = 0;
};

/// (i/h) int_0^{2 t0} Theta_{t0}(t) B(t) exp(i (S(t) + E t) / h) dt, where dS
/// (and d2S for the stationary-phase comparison) are derivatives of S in t.
inline TimeIntegralResult time_integral(const RealFn& B, const RealFn& S, const RealFn& dS, const RealFn& d2S, double E,
                                        double h, double t0, bool with_stationary_phase = false,
                                        const OscillatoryOptions& opt = {}) {
  const cplx ih(0.0, 1.0 / h);
  RealFn Bc = [&](double t) { return cutoff(t, t0) * B(t); };
  RealFn phase = [&](double t) { return S(t) + E * t; };
  RealFn dphase = [&](double t) { return dS(t) + E; };
  TimeIntegralResult res;
  const auto q = oscillatory_integral(Bc, phase, dS ? dphase : RealFn(), 0.0, 2 * t0, h, opt);
  res.value = ih * q.value;
  res.panels = q.panels;
  if (with_stationary_phase) {
    if (!dS || !d2S) throw PreconditionError("stationary-phase comparison needs dS and d2S");
    auto sp = stationary_phase(Bc, phase, dphase, d2S, 0.0, 2 * t0, h);
    res.stationary_phase = ih * sp.value;
    res.warnings = sp.warnings;
    for (const auto& p : sp.points)
      if (p.t > t0 - std::sqrt(h))
        res.warnings.push_back("critical point at t = " + std::to_string(p.t) + " is inside the cutoff transition");
  }
  return res;
}

/// Quadrature and leading stationary-phase value of int B exp(i(S + E t)/h) dt
/// over [0, 2] for the normal-form phase S = -x^2 t - t^3 / 3 with a smooth
/// bump amplitude supported in (0.1, 1.9).
struct NormalFormPhaseSample {
  double h = 0.0;
  cplx quadrature;
  cplx stationary_phase;
  double relative_error = 0.0;
};

inline NormalFormPhaseSample normal_form_phase_sample(double h, double x = 0.5, double E = 1.0) {
  RealFn B = [](double t) { return smooth_bump(t, 0.1, 1.9, 0.3); };
  RealFn S = [x, E](double t) { return -x * x * t - t * t * t / 3 + E * t; };
  RealFn dS = [x, E](double t) { return -x * x - t * t + E; };
  RealFn d2S = [](double t) { return -2 * t; };
  NormalFormPhaseSample s;
  s.h = h;
  OscillatoryOptions opt;
  opt.rtol = 1e-12;
  s.quadrature = oscillatory_integral(B, S, dS, 0.0, 2.0, h, opt).value;
  s.stationary_phase = stationary_phase(B, S, dS, d2S, 0.0, 2.0, h).value;
  s.relative_error = std::abs(s.quadrature - s.stationary_phase) / std::abs(s.quadrature);
  return s;
}

// ---------------------------------------------------------------------------
// Transport and WKB charts of the Bessel flow-out (n = 2)

/// Amplitudes on Lambda in the chart parameters (phi, psi, t).
struct Amplitude {
  std::function<double(double phi, double psi)> a;
  std::function<double(double phi, double psi, double t)> b;
};

/// Transport along the flow-out with the invariant measure d phi d psi dt:
/// the half-density coefficient is constant on trajectories, so b = a.
inline Amplitude transport_amplitude(std::function<double(double, double)> a) {
  Amplitude am;
  am.a = a;
  am.b = [a](double phi, double psi, double) { return a(phi, psi); };
  return am;
}

/// b = a |F(phi, psi, 0) / F(phi, psi, t)|^{1/2} with F = det(P, P_psi).
/// Kept for comparison; its WKB residual is only O(h) (see tests).
inline Amplitude density_weighted_amplitude(std::function<double(double, double)> a, std::shared_ptr<const BesselFlow> flow) {
  Amplitude am;
  am.a = a;
  am.b = [a, flow](double phi, double psi, double t) {
    const double F0 = flow->jet(phi, Vec::Constant(1, psi), 0.0).det_P_Ppsi();
    const double Ft = flow->jet(phi, Vec::Constant(1, psi), t).det_P_Ppsi();
    if (Ft == 0.0) throw CausticError("density vanishes along the trajectory");
    return a(phi, psi) * std::sqrt(std::abs(F0 / Ft));
  };
  return am;
}

enum class AmplitudeRule { half_density, density_weighted };

struct ChartLocation {
  double phi = 0.0, psi = 0.0;
  BesselFlowJet jet;
  double jacobian = 0.0;  // det dX / d(phi, psi)
};

struct WkbResidual {
  double eikonal = 0.0;    // O(1) coefficient, zero on an exact eikonal
  double transport = 0.0;  // O(h) coefficient
  double second = 0.0;     // O(h^2) coefficient
  cplx at(double h) const { return cplx(-eikonal + h * h * second, h * transport); }
};

/// Caustic-free WKB chart B exp(i S / h) of the flow-out of the Bessel
/// cylinder under H = |p|^m / rho in the plane.
class BesselWkbChart {
 public:
  BesselWkbChart(const Polynomial& rho, int m, double t_max, std::function<double(double, double)> a,
                 AmplitudeRule rule = AmplitudeRule::half_density)
      : rho_(rho), m_(m), h_(hamiltonians::conformal(m, rho)),
        flow_(std::make_shared<const BesselFlow>(h_, 2, t_max)), rule_(rule) {
    amp_ = rule == AmplitudeRule::half_density ? transport_amplitude(a) : density_weighted_amplitude(a, flow_);
  }

  const Hamiltonian& hamiltonian() const { return h_; }
  int degree() const { return m_; }
  double rho(const Vec& x) const { return rho_(x); }
  const BesselFlow& flow() const { return *flow_; }
  const Amplitude& amplitude() const { return amp_; }

  /// Newton solve of X(phi, psi, t) = x from a seed.
  ChartLocation locate(const Vec& x, double t, double phi, double psi) const {
    double best = std::numeric_limits<double>::infinity();
    double best_phi = phi, best_psi = psi;
    for (int it = 0; it < 60; ++it) {
      const auto j = flow_->jet(phi, Vec::Constant(1, psi), t);
      const Vec r = j.X - x;
      const Eigen::Matrix2d J = j.X_u;
      const double scale = 1 + x.norm() + std::abs(phi);
      if (r.norm() <= 1e-14 * scale) return finish(phi, psi, j);
      if (r.norm() < best) {
        best = r.norm();
        best_phi = phi;
        best_psi = psi;
      }
      const double det = J.determinant();
      if (std::abs(det) < 1e-10) throw CausticError("chart inversion hit the caustic (det dX/d(phi,psi) = 0)");
      const Eigen::Vector2d d = J.inverse() * r;
      phi -= d[0];
      psi -= d[1];
      if (d.norm() < 1e-15 * (1 + std::abs(phi) + std::abs(psi))) return finish(phi, psi, flow_->jet(phi, Vec::Constant(1, psi), t));
    }
    // Newton stalls at the rounding level of the flow map for large |phi|
    if (best <= 1e-11 * (1 + x.norm() + std::abs(best_phi)))
      return finish(best_phi, best_psi, flow_->jet(best_phi, Vec::Constant(1, best_psi), t));
    throw EvaluationError("chart inversion did not converge at x = (" + std::to_string(x[0]) + ", " +
                          std::to_string(x[1]) + "), t = " + std::to_string(t));
  }

  /// The straight-ray seed for the sheet with sign(phi) = sheet at t = 0.
  static std::pair<double, double> initial_seed(const Vec& x, int sheet) {
    const double psi = std::atan2(x[1], x[0]);
    if (sheet >= 0) return {x.norm(), psi};
    return {-x.norm(), psi + std::numbers::pi};
  }

  double phase(const ChartLocation& c, double t) const {
    // S0 + int p dx - E t with S0 = phi; for m = 1 the last two cancel
    return c.phi + c.jet.action - c.jet.E * t;
  }

  double amplitude_at(const ChartLocation& c, double t) const {
    const double b = amp_.b(c.phi, c.psi, t);
    if (b == 0.0) return 0.0;
    if (rule_ == AmplitudeRule::density_weighted) {
      const double F = c.jet.det_P_Ppsi();
      return b / std::sqrt(std::abs(F));
    }
    if (std::abs(c.jacobian) < 1e-12) throw CausticError("x-projection of the chart is singular here");
    return b / (std::pow(rho_(c.jet.X), 1.0 / m_) * std::sqrt(std::abs(c.jacobian)));
  }

  /// Residual coefficients of the evolution operator applied to B exp(iS/h):
  /// m = 1 uses the wave operator h^2 (rho^2 d_t^2 - Delta), m = 2 uses
  /// i h d_t + h^2 rho^{-1} Delta. Derivatives of S and B by differences.
  WkbResidual residual(const Vec& x, double t, double phi_seed, double psi_seed) const {
    const ChartLocation c0 = locate(x, t, phi_seed, psi_seed);
    auto at = [&](const Vec& y, double s) {
      const ChartLocation c = locate(y, s, c0.phi, c0.psi);
      struct V {
        double S, B, St;
        Vec P;
      };
      const Vec P = c.jet.P;
      return V{phase(c, s), amplitude_at(c, s), -h_.value(y, P), P};
    };
    const auto v0 = at(x, t);
    const double dl = 1e-3;
    // B derivatives
    double Bt, Btt, lapB = 0.0;
    Vec gB(2);
    {
      const auto p = at(x, t + dl), q = at(x, t - dl);
      Bt = (p.B - q.B) / (2 * dl);
      Btt = (p.B - 2 * v0.B + q.B) / (dl * dl);
    }
    double divP = 0.0;
    for (int i = 0; i < 2; ++i) {
      Vec a = x, b = x;
      a[i] += dl;
      b[i] -= dl;
      const auto p = at(a, t), q = at(b, t);
      gB[i] = (p.B - q.B) / (2 * dl);
      lapB += (p.B - 2 * v0.B + q.B) / (dl * dl);
      divP += (p.P[i] - q.P[i]) / (2 * dl);
    }
    const double St = v0.St;
    const double Stt = (at(x, t + dl).St - at(x, t - dl).St) / (2 * dl);
    const Vec gS = v0.P;
    const double r = rho_(x);
    const double B = v0.B;
    WkbResidual res;
    if (m_ == 1) {
      res.eikonal = B * (r * r * St * St - gS.squaredNorm());
      res.transport = r * r * (2 * Bt * St + B * Stt) - (2 * gB.dot(gS) + B * divP);
      res.second = r * r * Btt - lapB;
    } else {
      res.eikonal = B * (St + gS.squaredNorm() / r);
      res.transport = Bt + (2 * gB.dot(gS) + B * divP) / r;
      res.second = lapB / r;
    }
    return res;
  }

 private:
  ChartLocation finish(double phi, double psi, const BesselFlowJet& j) const {
    ChartLocation c;
    c.phi = phi;
    c.psi = psi;
    c.jet = j;
    c.jacobian = Eigen::Matrix2d(j.X_u).determinant();
    return c;
  }

  Polynomial rho_;
  int m_;
  Hamiltonian h_;
  std::shared_ptr<const BesselFlow> flow_;
  Amplitude amp_;
  AmplitudeRule rule_;
};

/// Continuation of one sheet of the chart over a fixed x along t in [0, t_end].
class TimeSheet {
 public:
  TimeSheet(const BesselWkbChart& chart, const Vec& x, int sheet, double t_end, int nodes = 200)
      : chart_(chart), x_(x) {
    auto [phi, psi] = BesselWkbChart::initial_seed(x, sheet);
    for (int k = 0; k <= nodes; ++k) {
      const double t = t_end * k / nodes;
      double sp = phi, ss = psi;
      if (k >= 2) {
        // linear extrapolation from the last two nodes
        sp = 2 * phi_.back() - phi_[phi_.size() - 2];
        ss = 2 * psi_.back() - psi_[psi_.size() - 2];
      }
      const ChartLocation c = chart.locate(x, t, sp, ss);
      t_.push_back(t);
      phi_.push_back(c.phi);
      psi_.push_back(c.psi);
      phi = c.phi;
      psi = c.psi;
    }
  }

  ChartLocation at(double t) const {
    // the quadrature asks for S, B and dS at the same node in turn
    if (cached_ && cache_t_ == t) return cache_;
    const auto it = std::lower_bound(t_.begin(), t_.end(), t);
    std::size_t k = static_cast<std::size_t>(it - t_.begin());
    if (k >= t_.size()) k = t_.size() - 1;
    if (k > 0 && std::abs(t_[k - 1] - t) < std::abs(t_[k] - t)) --k;
    cache_ = chart_.locate(x_, t, phi_[k], psi_[k]);
    cache_t_ = t;
    cached_ = true;
    return cache_;
  }

  double S(double t) const { return chart_.phase(at(t), t); }
  double B(double t) const { return chart_.amplitude_at(at(t), t); }
  /// dS/dt at fixed x is -H(x, P).
  double dS(double t) const { return -chart_.hamiltonian().value(x_, at(t).jet.P); }

 private:
  const BesselWkbChart& chart_;
  Vec x_;
  std::vector<double> t_, phi_, psi_;
  mutable ChartLocation cache_;
  mutable double cache_t_ = 0.0;
  mutable bool cached_ = false;
};

/// u_h(x, E) ~ (i/h) int Theta_{t0}(t) [K b](x, t) exp(i E t / h) dt summed over
/// the two sheets of the chart over x.
inline cplx evaluate_time_integral(const BesselWkbChart& chart, const Vec& x, double E, double h, double t0) {
  cplx total = 0.0;
  for (int sheet : {1, -1}) {
    const TimeSheet ts(chart, x, sheet, 2 * t0);
    RealFn B = [&](double t) { return ts.B(t); };
    RealFn S = [&](double t) { return ts.S(t); };
    RealFn dS = [&](double t) { return ts.dS(t); };
    OscillatoryOptions opt;
    opt.rtol = 1e-8;
    opt.initial_panels = 8;
    total += time_integral(B, S, dS, RealFn(), E, h, t0, false, opt).value;
  }
  return total;
}

}  // namespace glance
