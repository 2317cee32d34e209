#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "glance/genfam.hpp"
#include "glance/hamiltonians.hpp"
#include "glance/manifolds.hpp"

using namespace glance;
namespace hm = glance::hamiltonians;
using std::numbers::pi;

namespace {

Vec v(std::initializer_list<double> l) {
  Vec u(static_cast<Eigen::Index>(l.size()));
  int i = 0;
  for (double d : l) u[i++] = d;
  return u;
}

Vec one(double a) { return Vec::Constant(1, a); }

Hamiltonian unit_speed() { return hm::conformal1(Polynomial::constant(2, 1.0)); }
Hamiltonian quadratic_rho() { return hm::conformal1(hm::rho_quadratic(2)); }

}  // namespace

// ---------------------------------------------------------------------------
// Phi_0

TEST(Phi0, OnCylinderIsPhiAndCritical) {
  const auto f = phi0_family(2);
  for (double phi : {-1.5, 0.0, 0.7, 2.0}) {
    for (double psi : {0.0, 1.0, 4.0}) {
      const Vec x = phi * sphere_omega(one(psi));
      const Vec th = v({1.0, phi, psi});
      EXPECT_NEAR(f(th, x), phi, 1e-14);
      EXPECT_LT(f.dtheta(th, x).norm(), 1e-14);
      EXPECT_LT((f.dx(th, x) - sphere_omega(one(psi))).norm(), 1e-15);
    }
  }
}

TEST(Phi0, VanishesAtZeroMultiplier) {
  const auto f = phi0_family(2);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> N;
  for (int k = 0; k < 20; ++k) EXPECT_EQ(f(v({0.0, 0.0, N(rng)}), v({N(rng), N(rng)})), 0.0);
}

TEST(Phi0, AnalyticDerivativesMatchDifferences) {
  const auto f = phi0_family(3);
  GeneratingFamily g = f;
  g.gradient_fn = nullptr;
  g.hessian_fn = nullptr;
  const Vec th = v({0.7, 1.1, 0.9, 2.3}), x = v({0.3, -0.8, 1.4});
  EXPECT_LT((f.gradient(th, x) - g.gradient(th, x)).norm(), 1e-8);
  EXPECT_LT((f.hessian(th, x) - g.hessian(th, x)).norm(), 1e-5);
}

TEST(Phi0, CriticalSetLiesOnCylinder) {
  const auto f = phi0_family(2);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(-2, 2);
  for (int k = 0; k < 10; ++k) {
    const Vec x = v({U(rng), U(rng)});
    const auto cps = critical_set_solve(f, x);
    ASSERT_FALSE(cps.empty());
    for (const auto& c : cps) {
      EXPECT_LE(c.residual, 1e-9);
      EXPECT_TRUE(c.rank_ok);
      const PhasePoint z = bessel_point(c.theta[1], one(c.theta[2]));
      EXPECT_LT((z.x - x).norm(), 1e-9);
      EXPECT_LT((z.p - c.p).norm(), 1e-9);
    }
  }
}

TEST(Phi0, RootsOverTwoOmega) {
  const auto f = phi0_family(2);
  const auto cps = critical_set_solve(f, v({2.0, 0.0}));
  ASSERT_EQ(cps.size(), 2u);
  bool saw_plus = false, saw_minus = false;
  for (const auto& c : cps) {
    if ((c.theta - v({1, 2, 0})).norm() < 1e-9 || (c.theta - v({1, 2, 2 * pi})).norm() < 1e-9) saw_plus = true;
    if ((c.theta - v({1, -2, pi})).norm() < 1e-9) saw_minus = true;
  }
  EXPECT_TRUE(saw_plus);
  EXPECT_TRUE(saw_minus);
}

TEST(Phi0, WrongSizesThrow) {
  const auto f = phi0_family(2);
  EXPECT_THROW(f(v({1, 2}), v({1, 2})), DomainError);
}

TEST(Phi0, ReducedPhaseAgreesAwayFromFocus) {
  const auto f = phi0_family(2);
  for (const Vec& x : {v({1.2, 0.4}), v({-0.3, 0.9}), v({0.5, -1.5})}) {
    const double psi = std::atan2(x[1], x[0]);
    const Vec seed = v({1.0, x.norm() + 0.1, psi < 0 ? psi + 2 * pi : psi});
    const auto cps = critical_set_solve(f, x, {seed});
    ASSERT_EQ(cps.size(), 1u);
    const auto& c = cps[0];
    EXPECT_NEAR(f(c.theta, x), reduced_bessel_phase(x, 1.0), 1e-6);
    // gradient of the reduced phase is the same momentum
    const double s = 1e-6;
    Vec g(2);
    for (int i = 0; i < 2; ++i) {
      Vec a = x, b = x;
      a[i] += s;
      b[i] -= s;
      g[i] = (reduced_bessel_phase(a, 1.0) - reduced_bessel_phase(b, 1.0)) / (2 * s);
    }
    EXPECT_LT((g - c.p).norm(), 1e-6);
    // the linear phase <omega(psi*), x> touches it at the point
    EXPECT_NEAR(sphere_omega(one(c.theta[2])).dot(x), reduced_bessel_phase(x, 1.0), 1e-6);
  }
  EXPECT_THROW(reduced_bessel_phase(v({0, 0}), 1.0), DomainError);
}

// ---------------------------------------------------------------------------
// Space-time family

TEST(Prop2Family, RequiresDegreeOne) {
  EXPECT_THROW(prop2_family(hm::conformal2(hm::rho_quadratic(2)), 2, 1.0), PreconditionError);
  EXPECT_THROW(prop2_family(hm::free(), 2, 1.0), PreconditionError);
}

TEST(Prop2Family, InitialConditionIsPhi0) {
  const auto f = prop2_family(quadratic_rho(), 2, 1.0);
  const auto f0 = phi0_family(2);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(-1.5, 1.5);
  for (int k = 0; k < 10; ++k) {
    const Vec th = v({U(rng), U(rng), 3 + U(rng)}), x = v({U(rng), U(rng)});
    Vec xt(3);
    xt << x, 0.0;
    EXPECT_EQ(f(th, xt), f0(th, x));
  }
}

TEST(Prop2Family, StraightRays) {
  const auto f = prop2_family(unit_speed(), 2, 2.0);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> U(-1.5, 1.5);
  for (int k = 0; k < 10; ++k) {
    const double lam = U(rng), phi = U(rng), psi = 3 + U(rng), t = 1.3 + 0.4 * U(rng);
    const Vec x = v({U(rng), U(rng)});
    const Vec w = sphere_omega(one(psi));
    const double expect = phi + lam * w.dot(x - (phi + t) * w);
    EXPECT_NEAR(f(v({lam, phi, psi}), v({x[0], x[1], t})), expect, 1e-10);
  }
}

TEST(Prop2Family, RayRootAtThreeZero) {
  const auto f = prop2_family(unit_speed(), 2, 2.0);
  const auto cps = critical_set_solve(f, v({3.0, 0.0, 1.0}), {v({0.8, 1.7, 0.2}), v({1.1, 2.2, 6.1})});
  ASSERT_FALSE(cps.empty());
  for (const auto& c : cps) {
    EXPECT_NEAR(c.theta[0], 1.0, 1e-9);
    EXPECT_NEAR(c.theta[1], 2.0, 1e-9);
    EXPECT_NEAR(std::remainder(c.theta[2], 2 * pi), 0.0, 1e-9);
    EXPECT_TRUE(c.rank_ok);
    EXPECT_FALSE(c.degenerate);
  }
  EXPECT_EQ(cps.size(), 1u);
}

TEST(Prop2Family, FarPointHasNoRoots) {
  const auto f = prop2_family(unit_speed(), 2, 2.0);
  const auto cps = critical_set_solve(f, v({60.0, 80.0, 1.0}));
  EXPECT_TRUE(cps.empty());
}

TEST(Prop2Family, HessianMatchesDifferencedGradient) {
  const auto f = prop2_family(quadratic_rho(), 2, 1.0);
  GeneratingFamily g = f;
  g.hessian_fn = nullptr;
  const Vec th = v({0.9, 0.6, 1.2}), xt = v({0.4, 0.7, 0.5});
  EXPECT_LT((f.hessian(th, xt) - g.hessian(th, xt)).norm(), 1e-5);
  GeneratingFamily h = f;
  h.gradient_fn = nullptr;
  EXPECT_LT((f.gradient(th, xt) - h.gradient(th, xt)).norm(), 1e-7);
}

TEST(Prop2Family, HamiltonJacobiOnChart) {
  const Hamiltonian H = quadratic_rho();
  const BesselFlow flow(H, 2, 1.0);
  const auto f = prop2_family(H, 2, 1.0);
  for (double phi : {-0.8, 0.3, 1.0})
    for (double psi : {0.4, 2.5})
      for (double t : {0.1, 0.5, 0.9}) {
        const auto [th, xt] = prop2_chart_point(flow, phi, one(psi), t);
        const Vec g = f.gradient(th, xt);
        const Vec p = g.segment(3, 2);
        EXPECT_NEAR(g[5] + H.value(xt.head(2), p), 0.0, 1e-7);
        // the same with a difference quotient in t alone
        const double s = 1e-5;
        Vec a = xt, b = xt;
        a[2] += s;
        b[2] -= s;
        const double dt = (f(th, a) - f(th, b)) / (2 * s);
        EXPECT_NEAR(dt + H.value(xt.head(2), p), 0.0, 1e-7);
        EXPECT_LT(f.dtheta(th, xt).norm(), 1e-9);
      }
}

TEST(Prop2Family, ChartBreakdownWhenPAndPpsiAlign) {
  // at the focal time of a converging family det(P, P_psi) vanishes; emulate
  // with the check directly on a hand-made jet
  BesselFlowJet j;
  j.P = v({1, 0});
  j.P_u = Mat::Zero(2, 2);
  j.P_u(0, 1) = 2.0;
  EXPECT_THROW(detail::check_chart(j), ChartBreakdownError);
  j.P_u(1, 1) = 1.0;
  EXPECT_NO_THROW(detail::check_chart(j));
}

TEST(Prop2Family, ImmersionIsIsotropic) {
  const Hamiltonian H = quadratic_rho();
  const BesselFlow flow(H, 2, 1.0);
  const auto f = prop2_family(H, 2, 1.0);
  auto iota = [&](const Vec& u) {
    const auto [th, xt] = prop2_chart_point(flow, u[0], one(u[1]), u[2]);
    Vec z(6);
    z << xt, f.dx(th, xt);
    return z;
  };
  for (const Vec& u : {v({0.3, 0.5, 0.4}), v({-0.6, 2.0, 0.7}), v({1.0, 4.0, 0.2})}) {
    Mat T(6, 3);
    for (int j = 0; j < 3; ++j) {
      const double s = 1e-5;
      Vec a = u, b = u;
      a[j] += s;
      b[j] -= s;
      T.col(j) = (iota(a) - iota(b)) / (2 * s);
    }
    for (int i = 0; i < 3; ++i)
      for (int j = i + 1; j < 3; ++j) EXPECT_LT(std::abs(symplectic_product(T.col(i), T.col(j))), 1e-6);
  }
}

// ---------------------------------------------------------------------------
// Invariant density

TEST(InvariantDensity, UnitAtTimeZero) {
  const Hamiltonian H = quadratic_rho();
  const BesselFlow flow(H, 2, 1.0);
  const auto f = prop2_family(H, 2, 1.0);
  const auto y = prop2_density_coordinates(2);
  for (double phi : {-1.0, 0.0, 0.5})
    for (double psi : {0.1, 3.0}) {
      const auto [th, xt] = prop2_chart_point(flow, phi, one(psi), 0.0);
      EXPECT_NEAR(std::abs(invariant_density(f, y, th, xt)), 1.0, 1e-6);
    }
}

TEST(InvariantDensity, StraightRaysStayUnit) {
  const Hamiltonian H = unit_speed();
  const BesselFlow flow(H, 2, 1.5);
  const auto f = prop2_family(H, 2, 1.5);
  const auto y = prop2_density_coordinates(2);
  for (double phi : {-0.5, 0.7}) {
    const auto [th, xt] = prop2_chart_point(flow, phi, one(1.0), 1.0);
    EXPECT_NEAR(std::abs(invariant_density(f, y, th, xt)), 1.0, 1e-6);
  }
}

TEST(InvariantDensity, MatchesDeterminantOnGrid) {
  for (const Hamiltonian& H : {unit_speed(), quadratic_rho()}) {
    const BesselFlow flow(H, 2, 0.8);
    const auto f = prop2_family(H, 2, 0.8);
    const auto y = prop2_density_coordinates(2);
    double worst = 0.0;
    for (int a = 0; a < 5; ++a)
      for (int b = 0; b < 8; ++b)
        for (int c = 0; c < 6; ++c) {
          const double phi = -1.0 + 0.5 * a, psi = 2 * pi * b / 8, t = 0.8 * c / 5;
          const auto [th, xt] = prop2_chart_point(flow, phi, one(psi), t);
          const double F = invariant_density(f, y, th, xt);
          const double D = flow.jet(phi, one(psi), t).det_P_Ppsi();
          worst = std::max(worst, std::abs(std::abs(F) - std::abs(D)) / std::abs(D));
        }
    EXPECT_LT(worst, 1e-5) << H.name();
  }
}

TEST(InvariantDensity, SignConstantAlongChart) {
  const Hamiltonian H = quadratic_rho();
  const BesselFlow flow(H, 2, 0.8);
  const auto f = prop2_family(H, 2, 0.8);
  const auto y = prop2_density_coordinates(2);
  int sign = 0;
  for (int k = 0; k <= 40; ++k) {
    const double s = k / 40.0;
    const auto [th, xt] = prop2_chart_point(flow, -1.0 + 2 * s, one(0.3 + 5 * s), 0.8 * s);
    const double F = invariant_density(f, y, th, xt);
    const int sg = F > 0 ? 1 : -1;
    if (sign == 0) sign = sg;
    EXPECT_EQ(sg, sign) << "at s = " << s;
  }
}

TEST(InvariantDensity, IndependentOfExtension) {
  const Hamiltonian H = quadratic_rho();
  const BesselFlow flow(H, 2, 0.8);
  const auto f = prop2_family(H, 2, 0.8);
  const auto y1 = prop2_density_coordinates(2);
  const auto y2 = perturbed_density_coordinates(f, 2, 0.37);
  for (double t : {0.0, 0.4, 0.8}) {
    const auto [th, xt] = prop2_chart_point(flow, 0.6, one(1.3), t);
    const double F1 = invariant_density(f, y1, th, xt);
    const double F2 = invariant_density(f, y2, th, xt);
    EXPECT_NEAR(F1, F2, 1e-6 * std::abs(F1));
    // off C_Phi the two extensions disagree
    Vec off = th;
    off[0] += 0.3;
    Vec xo = xt;
    xo[0] += 0.2;
    EXPECT_GT(std::abs(invariant_density(f, y1, off, xo) - invariant_density(f, y2, off, xo)), 1e-4);
  }
}

TEST(InvariantDensity, DegenerateThrows) {
  GeneratingFamily f;
  f.N = 1;
  f.d = 1;
  f.value = [](const Vec& th, const Vec& x) { return th[0] * th[0] * th[0] + 0.0 * x[0]; };
  f.theta_box = {{-1, 1}};
  f.theta_period = {0};
  DensityCoordinates y;
  y.y = [](const Vec& th, const Vec&) { return th; };
  y.jacobian = [](const Vec&, const Vec&) {
    Mat J(1, 2);
    J << 0.0, 1.0;
    return J;
  };
  EXPECT_THROW(invariant_density(f, y, v({0.0}), v({0.0})), DensityDegenerateError);
}

// ---------------------------------------------------------------------------
// Phi_+^E

TEST(PhiPlus, StraightRaysAtUnitEnergy) {
  const auto f = phi_plus_family(unit_speed(), 2, 1.0, 2.0);
  const Vec x = v({2.5, 0.0});
  const auto cps = critical_set_solve(f, x, {v({0.9, 1.2, 0.1, 1.2}), v({1.1, 0.8, 6.2, 1.6})});
  ASSERT_FALSE(cps.empty());
  for (const auto& c : cps) {
    const double phi = c.theta[1], t = c.theta[3];
    const Vec w = sphere_omega(one(c.theta[2]));
    EXPECT_LT(((phi + t) * w - x).norm(), 1e-9);
    EXPECT_LT((c.p - w).norm(), 1e-9);
    EXPECT_NEAR(unit_speed().value(x, c.p), 1.0, 1e-9);
  }
}

TEST(PhiPlus, TimeStationarityIsEnergy) {
  const Hamiltonian H = quadratic_rho();
  const double E = 0.8;
  const auto f = phi_plus_family(H, 2, E, 1.0);
  const BesselFlow flow(H, 2, 1.0);
  const auto [th, xt] = prop2_chart_point(flow, 0.5, one(1.0), 0.4);
  Vec tp(4);
  tp << th, xt[2];
  const Vec g = f.gradient(tp, xt.head(2));
  EXPECT_NEAR(g[3], E - H.value(xt.head(2), g.tail(2)), 1e-9);
  EXPECT_NEAR(g[3], 0.0, 1e-9);  // phi = 0.5 sits on the energy level 1/(1 + 0.25)
}

TEST(PhiPlus, GlancingStartRejected) {
  // for rho = 1 + |x|^2 the point phi = 0 is glancing
  EXPECT_THROW(require_non_glancing(quadratic_rho(), 0.0, one(0.7)), PreconditionError);
  EXPECT_NO_THROW(require_non_glancing(quadratic_rho(), 0.5, one(0.7)));
}

TEST(PhiPlus, MatchesEnergyFlowOut) {
  const Hamiltonian H = quadratic_rho();
  const double E = 0.8, phi0 = 0.5, psi0 = 1.0, t_max = 0.7;
  require_non_glancing(H, phi0, one(psi0));
  const auto f = phi_plus_family(H, 2, E, t_max);
  EnergySliceOptions opt;
  opt.seed = phi0;
  const auto chart = flow_out_energy(bessel_chart(2), H, E, t_max, 1e-10, opt);
  double forward = 0.0, backward = 0.0;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) {
      const double psi = psi0 - 0.3 + 0.2 * a, t = 0.1 + 0.5 * b / 3;
      const PhasePoint z = chart.embed(v({psi, t}));
      const auto cps = critical_set_solve(f, z.x, {v({1.05, phi0 - 0.03, psi + 0.02, t - 0.02})});
      ASSERT_EQ(cps.size(), 1u);
      const auto& c = cps[0];
      forward = std::max(forward, (c.p - z.p).norm());
      const PhasePoint back = chart.embed(v({c.theta[2], c.theta[3]}));
      backward = std::max(backward, std::hypot((back.x - c.x).norm(), (back.p - c.p).norm()));
    }
  EXPECT_LT(std::max(forward, backward), 1e-5);
}
