#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "glance/genfam.hpp"
#include "glance/glancing.hpp"
#include "glance/hamiltonians.hpp"
#include "glance/manifolds.hpp"
#include "glance/normal_form.hpp"
#include "glance/semiclassical.hpp"

namespace glance::acceptance {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct Options {
  unsigned seed = 20240611;
};

// Collects named worst-case measurements against their limits.
class Ledger {
 public:
  void le(const std::string& what, double value, double limit) {
    std::ostringstream os;
    os.precision(3);
    os << what << '=' << value << (value <= limit ? "<=" : ">") << limit;
    add(os.str(), value <= limit);
  }
  void ge(const std::string& what, double value, double limit) {
    std::ostringstream os;
    os.precision(3);
    os << what << '=' << value << (value >= limit ? ">=" : "<") << limit;
    add(os.str(), value >= limit);
  }
  void in(const std::string& what, double value, double lo, double hi) {
    std::ostringstream os;
    os.precision(4);
    os << what << '=' << value << " in [" << lo << ',' << hi << ']';
    add(os.str(), value >= lo && value <= hi);
  }
  void check(const std::string& what, bool ok) { add(what + (ok ? "" : " (violated)"), ok); }

  bool ok() const { return ok_; }
  std::string text() const { return text_; }

 private:
  void add(const std::string& s, bool ok) {
    if (!text_.empty()) text_ += "; ";
    text_ += s;
    ok_ = ok_ && ok;
  }
  bool ok_ = true;
  std::string text_;
};

namespace detail {

namespace hm = glance::hamiltonians;
using std::numbers::pi;

inline Vec one(double a) { return Vec::Constant(1, a); }

inline Vec vec(std::initializer_list<double> l) {
  Vec u(static_cast<Eigen::Index>(l.size()));
  int i = 0;
  for (double d : l) u[i++] = d;
  return u;
}

inline Hamiltonian shifted_example(double phi, double psi) {
  return hm::conformal1(hm::rho_shifted_half(bessel_point(phi, psi).x));
}

}  // namespace detail

inline CriterionResult glancing_identities(const Options& o = {}) {
  using namespace detail;
  Ledger L;
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> mag(0.2, 2.0), ang(0, 2 * pi);
  double res = 0, det_err = 0, tr_err = 0;
  bool e0_exact = true;
  for (int i = 0; i < 10; ++i) {
    const double phi = (i % 2 ? 1 : -1) * mag(rng), psi = ang(rng);
    const Vec x0 = bessel_point(phi, psi).x;
    const auto h = shifted_example(phi, psi);
    const double rho = hm::rho_shifted_half(x0)(x0);
    e0_exact = e0_exact && 1.0 / rho == 2.0;
    const double E0 = cylinder_energy(h, phi, one(psi));
    res = std::max(res, glancing_residual(h, phi, psi, E0).norm());
    const auto r = restricted_hessian(h, phi, psi);
    det_err = std::max(det_err, std::abs(std::pow(rho, 4) * r.det() - phi * phi) / (phi * phi));
    tr_err = std::max(tr_err, std::abs(rho * rho * r.trace() + (1 + phi * phi)) / (1 + phi * phi));
  }
  L.le("residual", res, 1e-8);
  L.le("det rel", det_err, 1e-5);
  L.le("trace rel", tr_err, 1e-5);
  L.check("E0 == 2", e0_exact);
  return {1, "glancing identities", L.ok(), L.text()};
}

inline CriterionResult pair_brackets(const Options& o = {}) {
  using namespace detail;
  Ledger L;
  const PhasePoint z(Vec::Zero(2), Vec::Zero(2));
  const auto g = model_glancing_g();
  std::mt19937_64 rng(o.seed + 1);
  std::uniform_real_distribution<double> u(-5, 5);
  double err = 0;
  int not7 = 0;
  for (auto c : {MixedCase::I, MixedCase::II, MixedCase::III}) {
    for (int i = 0; i < 20; ++i) {
      double a = u(rng);
      if (std::abs(a) < 0.05) a = 0.5;
      const auto q = quadratic_phase_lagrangian(c, a);
      const auto r = pair_classification(q.f1, q.f2, g, z);
      Mat A(2, 2);
      Vec B(2);
      if (c == MixedCase::I) {
        A << 2, 2 * a, 2 * a, 2 * a * a;
        B << -2 * a, 2;
      } else {
        A << 0, 0, 0, 2;
        B << 2, 0;
      }
      err = std::max(err, std::max((r.A - A).norm(), (r.B - B).norm()));
      if (r.case_index != 7) ++not7;
    }
  }
  int admissible = 0, total = 0;
  for (double al = -3; al <= 3; al += 0.5)
    for (double be = -3; be <= 3; be += 0.5)
      for (double ga = -3; ga <= 3; ga += 0.5) {
        ++total;
        if (admissible_glancing_pair(quadratic_phase_case_iv(al, be, ga))) ++admissible;
      }
  L.le("bracket error", err, 1e-5);
  L.check("all case 7", not7 == 0);
  L.check("case IV admissible " + std::to_string(admissible) + "/" + std::to_string(total), admissible == 0);
  return {2, "pair brackets and case table", L.ok(), L.text()};
}

inline CriterionResult density_identity(const Options& = {}) {
  using namespace detail;
  Ledger L;
  double worst = 0, unit = 0;
  for (const Hamiltonian& H : {hm::conformal1(Polynomial::constant(2, 1.0)), hm::conformal1(hm::rho_quadratic(2))}) {
    const BesselFlow flow(H, 2, 0.8);
    const auto f = prop2_family(H, 2, 0.8);
    const auto y = prop2_density_coordinates(2);
    for (int a = 0; a < 5; ++a)
      for (int b = 0; b < 8; ++b)
        for (int c = 0; c < 6; ++c) {
          const double phi = -1.0 + 0.5 * a, psi = 2 * pi * b / 8, t = 0.8 * c / 5;
          const auto [th, xt] = prop2_chart_point(flow, phi, one(psi), t);
          const double F = invariant_density(f, y, th, xt);
          const double D = flow.jet(phi, one(psi), t).det_P_Ppsi();
          worst = std::max(worst, std::abs(std::abs(F) - std::abs(D)) / std::abs(D));
          if (c == 0) unit = std::max(unit, std::abs(std::abs(F) - 1.0));
        }
  }
  L.le("rel error", worst, 1e-5);
  L.le("|F|-1 at t=0", unit, 1e-5);
  return {3, "invariant density", L.ok(), L.text()};
}

inline CriterionResult generating_family(const Options& = {}) {
  using namespace detail;
  Ledger L;
  const Hamiltonian H = hm::conformal1(hm::rho_quadratic(2));
  const double E = 0.8, phi0 = 0.5, psi0 = 1.0, t_max = 0.7;
  require_non_glancing(H, phi0, one(psi0));
  const auto f = phi_plus_family(H, 2, E, t_max);
  EnergySliceOptions eopt;
  eopt.seed = phi0;
  const auto chart = flow_out_energy(bessel_chart(2), H, E, t_max, 1e-10, eopt);
  double forward = 0, backward = 0;
  bool unique = true;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) {
      const double psi = psi0 - 0.3 + 0.2 * a, t = 0.1 + 0.5 * b / 3;
      const PhasePoint z = chart.embed(vec({psi, t}));
      const auto cps = critical_set_solve(f, z.x, {vec({1.05, phi0 - 0.03, psi + 0.02, t - 0.02})});
      if (cps.size() != 1) {
        unique = false;
        continue;
      }
      const auto& c = cps[0];
      forward = std::max(forward, (c.p - z.p).norm());
      const PhasePoint back = chart.embed(vec({c.theta[2], c.theta[3]}));
      backward = std::max(backward, std::hypot((back.x - c.x).norm(), (back.p - c.p).norm()));
    }
  L.check("one critical point per base point", unique);
  L.le("Hausdorff", std::max(forward, backward), 1e-5);

  const BesselFlow flow(H, 2, 1.0);
  const auto fam = prop2_family(H, 2, 1.0);
  double hj = 0;
  for (double phi : {-0.8, 0.3, 1.0})
    for (double psi : {0.4, 2.5})
      for (double t : {0.1, 0.5, 0.9}) {
        const auto [th, xt] = prop2_chart_point(flow, phi, one(psi), t);
        const Vec g = fam.gradient(th, xt);
        hj = std::max(hj, std::abs(g[5] + H.value(xt.head(2), g.segment(3, 2))));
      }
  L.le("HJ residual", hj, 1e-6);
  return {4, "generating family cross-check", L.ok(), L.text()};
}

inline CriterionResult worked_example(const Options& o = {}) {
  Ledger L;
  std::mt19937_64 rng(o.seed + 5);
  std::uniform_real_distribution<double> u(-2, 2);
  double defect = 0, identity = 0;
  for (int k = 0; k < 100; ++k) {
    const double T = u(rng);
    const auto s = example_manifold_point(u(rng), u(rng), u(rng));
    identity = std::max(identity, normal_form_identities(example_canonical_map(s, T)).cwiseAbs().maxCoeff());
    if (k < 20) defect = std::max(defect, example_symplectic_defect(s, T));
  }
  L.le("symplectic defect", defect, 1e-9);
  L.check("identities exact (max " + std::to_string(identity) + ")", identity == 0.0);
  return {5, "worked-example normal form", L.ok(), L.text()};
}

inline CriterionResult transition_regimes(const Options& = {}) {
  Ledger L;
  const auto s = simplest_example_sampler();
  const std::vector<std::pair<double, Regime>> expect{{0.90, Regime::infinity_curve},
                                                      {0.95, Regime::infinity_curve},
                                                      {1.00, Regime::degenerate},
                                                      {1.05, Regime::empty},
                                                      {1.10, Regime::empty}};
  std::string got;
  bool regimes = true, shape = true;
  for (const auto& [E, want] : expect) {
    const auto r = s.sample(E);
    got += (got.empty() ? "" : ",") + to_string(r.regime);
    regimes = regimes && r.regime == want;
    if (r.regime == Regime::infinity_curve) shape = shape && r.self_intersections == 1 && r.cusps.size() == 2;
  }
  L.check("regimes " + got, regimes);
  L.check("1 self-intersection and 2 cusps", shape);
  const double E = 0.9, da = 1e-5;
  double worst = 0;
  for (double a : {0.3, 1.0, 2.0, 2.8, 3.6, 4.4, 5.5}) {
    const auto p = s.section(E, a + da), q = s.section(E, a - da), c = s.section(E, a);
    worst = std::max(worst, std::abs((p.phase - q.phase) - c.py * (p.y - q.y)) / (2 * da));
  }
  L.le("p_y - dphase/dy", worst, 1e-5);
  return {6, "transition regimes", L.ok(), L.text()};
}

inline CriterionResult helmholtz(const Options& = {}) {
  Ledger L;
  const auto c = helmholtz_check(0.1, 1e-3, 5e-4);
  L.in("ratio", c.ratio, 3.8, 4.2);
  return {7, "Helmholtz second order", L.ok(), L.text()};
}

inline CriterionResult model_pair(const Options& = {}) {
  Ledger L;
  double worst = 0;
  for (const Vec& x : {Vec(Eigen::Vector2d(0.02, -0.05)), Vec(Eigen::Vector2d(-0.01, 0.03)),
                       Vec(Eigen::Vector3d(0.01, 0.0, 0.4))}) {
    const cplx u = model_pair_integral(gaussian_profile(), x, 0.05, 10.0);
    const cplx e = gaussian_model_closed_form(x, 0.05);
    worst = std::max(worst, std::abs(u - e) / std::abs(e));
  }
  const Vec x = Eigen::Vector2d(0.03, -0.2);
  const double diff = std::abs(model_pair_integral(gaussian_profile(), x, 0.05, 10.0) -
                               model_pair_integral(gaussian_profile(), x, 0.05, 20.0));
  L.le("rel error", worst, 1e-8);
  L.le("t0 10 vs 20", diff, 1e-10);
  return {8, "model pair", L.ok(), L.text()};
}

inline CriterionResult oscillatory_slope(const Options& = {}) {
  Ledger L;
  std::vector<double> hs{0.04, 0.02, 0.01}, errs;
  for (double h : hs) errs.push_back(normal_form_phase_sample(h).relative_error);
  L.ge("log-log slope", loglog_slope(hs, errs), 0.8);
  return {9, "stationary phase vs quadrature", L.ok(), L.text()};
}

inline CriterionResult structural_invariants(const Options& o = {}) {
  using namespace detail;
  Ledger L;
  const auto rho = hm::rho_quadratic(2);
  const auto rho3 = hm::rho_quadratic(3);
  EnergySliceOptions eopt;
  eopt.seed = 0.5;
  const std::vector<ManifoldChart> charts{
      bessel_chart(2),
      bessel_chart(3),
      plane_wave_chart(2),
      vertical_fiber_chart(2),
      flow_out(bessel_chart(2), hm::pn(2), 1.0),
      flow_out(bessel_chart(2), hm::conformal1(rho), 1.0),
      flow_out(bessel_chart(2), hm::conformal2(rho), 1.0),
      flow_out(bessel_chart(3), hm::conformal1(rho3), 0.5),
      flow_out_energy(bessel_chart(2), hm::conformal1(rho), 0.8, 0.7, 1e-10, eopt),
  };
  double lag = 0;
  for (const auto& c : charts) lag = std::max(lag, lagrangian_residual(c, 40));
  L.le("Lagrangian residual", lag, 1e-6);

  std::mt19937_64 rng(o.seed + 10);
  double eik = 0;
  for (const auto& c : {charts[5], charts[7]})
    for (int i = 0; i < 20; ++i) {
      const Vec u = c.sample(rng);
      eik = std::max(eik, std::abs(c.eikonal(u) - u[0]));
    }
  L.le("m=1 eikonal t-dependence", eik, 1e-7);

  std::uniform_real_distribution<double> U(-1.5, 1.5);
  double euler = 0;
  for (const auto& name : hm::registry_names()) {
    const auto h = hm::by_name(name, 2, rho);
    if (!h.degree()) continue;
    for (int i = 0; i < 50; ++i) {
      const Eigen::Vector2d x(U(rng), U(rng));
      Eigen::Vector2d p(U(rng), U(rng));
      if (p.norm() < 0.1) p += Eigen::Vector2d(0.5, 0.5);
      const double lhs = p.dot(h.grad_p(x, p)), rhs = *h.degree() * h.value(x, p);
      euler = std::max(euler, std::abs(lhs - rhs) / std::max(1.0, std::abs(rhs)));
    }
  }
  L.le("Euler identity", euler, 1e-8);
  return {10, "structural invariants", L.ok(), L.text()};
}

using Criterion = std::function<CriterionResult(const Options&)>;

inline std::vector<Criterion> all_criteria() {
  return {glancing_identities, pair_brackets,    density_identity, generating_family, worked_example,
          transition_regimes,  helmholtz,        model_pair,       oscillatory_slope, structural_invariants};
}

/// Runs one criterion, turning any exception into a failure with its message.
inline CriterionResult run_criterion(int id, const Criterion& c, const Options& o = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  CriterionResult r;
  try {
    r = c(o);
  } catch (const std::exception& e) {
    r.id = id;
    r.name = "criterion " + std::to_string(id);
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

inline std::string format_line(const CriterionResult& r) {
  std::ostringstream os;
  os.precision(2);
  os << std::fixed << (r.passed ? "PASS" : "FAIL") << " [" << r.id << "] " << r.name << " (" << r.seconds
     << " s): " << r.detail;
  return os.str();
}

}  // namespace glance::acceptance
