#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "glance/glancing.hpp"
#include "glance/hamiltonians.hpp"

using namespace glance;
namespace hm = glance::hamiltonians;
using std::numbers::pi;

namespace {

Vec one(double v) { return Vec::Constant(1, v); }

ScalarField field(const std::string& text) {
  return ScalarField::from_polynomial(Polynomial::parse(text, {"x1", "x2", "p1", "p2"}));
}

// H = |p|/rho with rho = (1 + |x - x0|^2)/2 and x0 = phi omega(psi)
Hamiltonian example_h(double phi, double psi) {
  return hm::conformal1(hm::rho_shifted_half(bessel_point(phi, psi).x));
}

const PhasePoint origin(Vec::Zero(2), Vec::Zero(2));

}  // namespace

TEST(GlancingResidual, PaperExampleIsGlancingAtEnergyTwo) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.2, 2.0), a(0, 2 * pi);
  for (int i = 0; i < 10; ++i) {
    const double phi = (i % 2 ? 1 : -1) * u(rng), psi = a(rng);
    const auto h = example_h(phi, psi);
    EXPECT_EQ(1.0 / hm::rho_shifted_half(bessel_point(phi, psi).x)(bessel_point(phi, psi).x), 2.0);
    EXPECT_NEAR(cylinder_energy(h, phi, one(psi)), 2.0, 1e-15);
    EXPECT_LE(glancing_residual(h, phi, psi, 2.0).norm(), 1e-8);
    EXPECT_LE(tangency_residual(h, phi, one(psi)).norm(), 1e-8);
  }
}

TEST(GlancingResidual, FreeHamiltonianGlancesEverywhereAtEnergyOne) {
  for (double phi : {-1.5, 0.0, 0.4})
    for (double psi : {0.0, 1.0, 4.0}) EXPECT_LE(glancing_residual(hm::free(), phi, psi, 1.0).norm(), 1e-12);
}

TEST(GlancingResidual, NonCriticalPointHasLargeResidual) {
  const auto rho = Polynomial::parse("1 + x^2", {"x", "y"});
  const auto h = hm::conformal1(rho);
  const double phi = 1.0, psi = 0.3;
  EXPECT_GE(glancing_residual(h, phi, psi, cylinder_energy(h, phi, one(psi))).norm(), 0.1);
}

TEST(GlancingResidual, NeedsDeclaredDegree) {
  Hamiltonian h("plain", [](const Vec& x, const Vec& p) { return p.squaredNorm() + x[0]; });
  EXPECT_THROW(glancing_residual(h, 0.0, 0.0, 1.0), UnsupportedError);
  EXPECT_NO_THROW(tangency_residual(h, 0.0, 0.0));
}

TEST(TangencyResidual, PnExamples) {
  const auto h = hm::pn(2);
  for (double phi : {-2.0, 0.0, 1.3}) EXPECT_LE(tangency_residual(h, phi, pi / 2).norm(), 1e-15);
  EXPECT_GE(tangency_residual(h, 0.0, 0.0).norm(), 0.5);
}

TEST(TangencyResidual, AgreesWithGlancingResidualProperty) {
  // for declared m: tangency = 0 and H = E  <=>  glancing residual = 0
  const auto rho = Polynomial::parse("1 + 0.3*x + x^2 + 0.5*y^2", {"x", "y"});
  for (int m : {1, 2}) {
    const auto h = hm::conformal(m, rho);
    for (const auto& r : glancing_search(h, {.phi_min = -1.5, .phi_max = 1.5})) {
      EXPECT_LE(tangency_residual(h, r.phi, r.psi).norm(), 1e-8);
      EXPECT_LE(glancing_residual(h, r.phi, r.psi, r.E0).norm(), 1e-8);
    }
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.5, 1.5), a(0, 2 * pi);
    for (int i = 0; i < 40; ++i) {
      const double phi = u(rng), psi = a(rng);
      const double E = cylinder_energy(h, phi, one(psi));
      const bool t0 = tangency_residual(h, phi, one(psi)).norm() <= 1e-8;
      const bool g0 = glancing_residual(h, phi, psi, E).norm() <= 1e-8;
      EXPECT_EQ(t0, g0);
    }
  }
}

TEST(ConformalTest, QuotedDichotomy) {
  const double phi = 1.2, psi = 0.7;
  EXPECT_TRUE(conformal_glancing_test(hm::rho_shifted_half(bessel_point(phi, psi).x), phi, psi));
  const auto lin = Polynomial::parse("1 + x", {"x", "y"});
  EXPECT_TRUE(conformal_glancing_test(lin, 0.0, pi / 2));
  EXPECT_FALSE(conformal_glancing_test(lin, 1.0, 0.0));
  EXPECT_FALSE(conformal_glancing_test(lin, 0.0, 0.0));
}

TEST(ConformalTest, MatchesGlancingResidualOnGrid) {
  // rho with a critical point off the axis and a nonzero gradient at 0
  const Eigen::Vector2d x0(0.6, -0.3);
  const auto rho = hm::rho_shifted_half(x0);
  const double phi0 = x0.norm(), psi0 = std::atan2(x0[1], x0[0]);
  std::vector<std::pair<double, double>> pts{{phi0, psi0}, {-phi0, psi0 + pi}};
  // phi = 0 points with omega orthogonal to grad rho(0) = -x0
  pts.push_back({0.0, psi0 + pi / 2});
  pts.push_back({0.0, psi0 - pi / 2});
  for (double phi : {-1.0, -0.3, 0.0, 0.5, 1.1})
    for (int j = 0; j < 12; ++j) pts.push_back({phi, 2 * pi * j / 12});
  for (int m : {1, 2}) {
    const auto h = hm::conformal(m, rho);
    for (auto [phi, psi] : pts) {
      const double E = cylinder_energy(h, phi, one(psi));
      const bool by_residual = glancing_residual(h, phi, psi, E).norm() <= 1e-9;
      EXPECT_EQ(by_residual, conformal_glancing_test(rho, phi, psi)) << "m=" << m << " phi=" << phi << " psi=" << psi;
    }
  }
}

TEST(CylinderGradient, ChainRuleMatchesFiniteDifferences) {
  const auto rho = Polynomial::parse("1 + 0.3*x + x^2 + 0.5*y^2 - 0.2*x*y", {"x", "y"});
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.5, 1.5), a(0, 2 * pi);
  for (int m : {1, 2}) {
    const auto h = hm::conformal(m, rho);
    for (int i = 0; i < 20; ++i) {
      const double phi = u(rng);
      const Vec psi = one(a(rng));
      EXPECT_LE((cylinder_gradient(h, phi, psi) - cylinder_gradient_fd(h, phi, psi)).norm(), 1e-6);
    }
  }
  const auto h3 = hm::conformal1(Polynomial::parse("1 + x^2 + 2*y^2 + 3*z^2 + x*z", {"x", "y", "z"}));
  const Eigen::Vector2d psi(0.8, 2.0);
  EXPECT_LE((cylinder_gradient(h3, 0.7, psi) - cylinder_gradient_fd(h3, 0.7, psi)).norm(), 1e-6);
}

TEST(CylinderGradient, VanishesAtCertifiedGlancingPoints) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.2, 2.0), a(0, 2 * pi);
  for (int i = 0; i < 10; ++i) {
    const double phi = u(rng), psi = a(rng);
    EXPECT_LE(cylinder_gradient(example_h(phi, psi), phi, one(psi)).norm(), 1e-12);
  }
}

TEST(RestrictedHessian, PaperExampleAtPhiTwo) {
  const auto r = restricted_hessian(example_h(2.0, 0.4), 2.0, 0.4);
  EXPECT_NEAR(r.det(), 64.0, 64.0 * 1e-5);
  EXPECT_NEAR(r.trace(), -20.0, 20.0 * 1e-5);
  EXPECT_EQ(r.kind, GlancingKind::max);
  EXPECT_NEAR(r.E0, 2.0, 1e-15);
}

TEST(RestrictedHessian, PaperExampleAtPhiOne) {
  const auto r = restricted_hessian(example_h(1.0, 2.2), 1.0, 2.2);
  EXPECT_NEAR(r.det(), 16.0, 16.0 * 1e-5);
  EXPECT_NEAR(r.trace(), -8.0, 8.0 * 1e-5);
  EXPECT_EQ(r.kind, GlancingKind::max);
}

TEST(RestrictedHessian, QuotedIdentitiesOnRandomPoints) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.2, 2.0), a(0, 2 * pi);
  for (int i = 0; i < 10; ++i) {
    const double phi = (i % 3 ? 1 : -1) * u(rng), psi = a(rng);
    const auto r = restricted_hessian(example_h(phi, psi), phi, psi);
    const double rho = 0.5;
    EXPECT_NEAR(std::pow(rho, 4) * r.det(), phi * phi, 1e-5 * phi * phi);
    EXPECT_NEAR(rho * rho * r.trace(), -(1 + phi * phi), 1e-5 * (1 + phi * phi));
  }
}

TEST(RestrictedHessian, FreeHamiltonianIsDegenerate) {
  EXPECT_EQ(restricted_hessian(hm::free(), 0.5, 1.0).kind, GlancingKind::degenerate);
}

TEST(RestrictedHessian, RejectsNonCriticalPoint) {
  EXPECT_THROW(restricted_hessian(hm::conformal1(hm::rho_quadratic(2)), 0.5, 0.0), PreconditionError);
}

TEST(RestrictedHessian, MinimumAndSaddleKinds) {
  // H = |p| rho-inverse with rho = 2 - (x^2 + y^2)/2 near 0: phi = 0 is a minimum along phi
  const auto h_min = hm::conformal2(Polynomial::parse("2 - 0.5*x^2 - 0.5*y^2", {"x", "y"}));
  EXPECT_EQ(restricted_hessian(h_min, 0.0, 0.3).kind, GlancingKind::degenerate);  // psi-flat at phi = 0
  const Eigen::Vector2d x0(1.0, 0.0);
  const auto h_sad = hm::conformal1(Polynomial::parse("1 + (x-1)^2 - 0.5*y^2", {"x", "y"}));
  const auto r = restricted_hessian(h_sad, 1.0, 0.0);
  EXPECT_EQ(r.kind, GlancingKind::saddle);
}

TEST(GlancingSearch, FindsAllCriticalPointsOfTheExample) {
  const Eigen::Vector2d x0(0.8, 0.0);
  const auto h = hm::conformal1(hm::rho_shifted_half(x0));
  const auto found = glancing_search(h, {.phi_min = -1.5, .phi_max = 1.5});
  // (0.8, 0), (-0.8, pi) and the two phi = 0 points with omega orthogonal to x0
  ASSERT_EQ(found.size(), 4u);
  int maxima = 0;
  for (const auto& r : found) {
    EXPECT_LE(tangency_residual(h, r.phi, r.psi).norm(), 1e-8);
    if (std::abs(r.phi) > 0.1) {
      EXPECT_NEAR(std::abs(r.phi), 0.8, 1e-8);
      EXPECT_EQ(r.kind, GlancingKind::max);
      ++maxima;
    } else {
      EXPECT_NEAR(std::abs(std::cos(r.psi[0])), 0.0, 1e-8);
    }
  }
  EXPECT_EQ(maxima, 2);
}

TEST(PairClassification, CaseOneAtATwo) {
  const auto q = quadratic_phase_lagrangian(MixedCase::I, 2.0);
  const auto r = pair_classification(q.f1, q.f2, model_glancing_g(), origin);
  Mat A(2, 2);
  A << 2, 4, 4, 8;
  EXPECT_LE((r.A - A).norm(), 1e-5);
  EXPECT_LE((r.B - Eigen::Vector2d(-4, 2)).norm(), 1e-5);
  EXPECT_EQ(r.case_index, 7);
  EXPECT_FALSE(r.marginal);
}

TEST(PairClassification, CaseOneRandomParameters) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int i = 0; i < 20; ++i) {
    double a = u(rng);
    if (std::abs(a) < 0.05) a = 0.5;
    const auto q = quadratic_phase_lagrangian(MixedCase::I, a);
    const auto r = pair_classification(q.f1, q.f2, model_glancing_g(), origin);
    Mat A(2, 2);
    A << 2, 2 * a, 2 * a, 2 * a * a;
    EXPECT_LE((r.A - A).norm(), 1e-5);
    EXPECT_LE((r.B - Eigen::Vector2d(-2 * a, 2)).norm(), 1e-5);
    EXPECT_EQ(r.case_index, 7);
  }
}

TEST(PairClassification, CasesTwoAndThree) {
  Mat A(2, 2);
  A << 0, 0, 0, 2;
  for (auto c : {MixedCase::II, MixedCase::III}) {
    for (double p : {-3.0, 0.5, 2.0}) {
      const auto q = quadratic_phase_lagrangian(c, p);
      EXPECT_TRUE(q.transversal);
      const auto r = pair_classification(q.f1, q.f2, model_glancing_g(), origin);
      EXPECT_LE((r.A - A).norm(), 1e-5);
      EXPECT_LE((r.B - Eigen::Vector2d(2, 0)).norm(), 1e-5);
      EXPECT_EQ(r.case_index, 7);
    }
  }
}

TEST(PairClassification, QuadraticPhaseFieldsForCaseOneAndThree) {
  const auto q = quadratic_phase_lagrangian(MixedCase::I, 1.0);
  const Eigen::Vector4d s(0.3, -0.7, 1.1, 0.2);
  EXPECT_NEAR(q.f1_poly(s), 1.1 - 0.3 - 0.7, 1e-15);
  EXPECT_NEAR(q.f2_poly(s), 0.2 + 0.3, 1e-15);
  EXPECT_TRUE(q.transversal);
  const auto q3 = quadratic_phase_lagrangian(MixedCase::III, 2.0);
  EXPECT_NEAR(q3.f1_poly(s), 0.3 + 2 * (1.1 - 0.7), 1e-15);
  EXPECT_NEAR(q3.f2_poly(s), 0.2 - 2 * (1.1 - 0.7), 1e-15);
  EXPECT_TRUE(q3.transversal);
  EXPECT_THROW(quadratic_phase_lagrangian(MixedCase::II, 0.0), DegenerateFamilyError);
}

TEST(PairClassification, TransversalityReportAgreesWithFiniteDifferenceTangents) {
  // tangent plane of {f1 = f2 = 0} from a finite-difference parametrization
  const double b = 2.0;
  const auto q = quadratic_phase_lagrangian(MixedCase::III, b);
  // parametrize by (x2, p1): x1 = -b (p1 + x2), p2 = b (p1 + x2)
  auto emb = [b](double x2, double p1) { return Eigen::Vector4d(-b * (p1 + x2), x2, p1, b * (p1 + x2)); };
  const double s = 1e-6;
  Mat M(4, 3);
  M.col(0) = (emb(s, 0) - emb(-s, 0)) / (2 * s);
  M.col(1) = (emb(0, s) - emb(0, -s)) / (2 * s);
  M.col(2) = Eigen::Vector4d(0, 0, 1, 0);
  EXPECT_EQ(Eigen::FullPivLU<Mat>(M).rank(), 3);
  EXPECT_TRUE(q.transversal);
  for (int j = 0; j < 2; ++j) {
    EXPECT_NEAR(q.f1_poly.gradient(Vec::Zero(4)).dot(M.col(j)), 0.0, 1e-9);
    EXPECT_NEAR(q.f2_poly.gradient(Vec::Zero(4)).dot(M.col(j)), 0.0, 1e-9);
  }
}

TEST(PairClassification, CaseFourNeverAdmissible) {
  int admissible = 0, total = 0;
  for (double al = -3; al <= 3; al += 0.5)
    for (double be = -3; be <= 3; be += 0.5)
      for (double ga = -3; ga <= 3; ga += 0.5) {
        ++total;
        if (admissible_glancing_pair(quadratic_phase_case_iv(al, be, ga))) ++admissible;
      }
  EXPECT_EQ(total, 13 * 13 * 13);
  EXPECT_EQ(admissible, 0);
  // while the cases with a family are admissible
  EXPECT_TRUE(admissible_glancing_pair(quadratic_phase_lagrangian(MixedCase::I, 1.5)));
  EXPECT_TRUE(admissible_glancing_pair(quadratic_phase_lagrangian(MixedCase::II, 1.5)));
  EXPECT_TRUE(admissible_glancing_pair(quadratic_phase_lagrangian(MixedCase::III, 1.5)));
}

TEST(PairClassification, InvariantUnderBracketSignFlip) {
  for (auto c : {MixedCase::I, MixedCase::II, MixedCase::III}) {
    const auto q = quadratic_phase_lagrangian(c, 1.7);
    const auto a = pair_classification(q.f1, q.f2, model_glancing_g(), origin);
    const auto b = pair_classification(q.f1, q.f2, model_glancing_g(), origin, 1e-6, BracketSign::opposite);
    EXPECT_LE((a.A - b.A).norm(), 1e-9);
    EXPECT_LE((a.B - b.B).norm(), 1e-9);
    EXPECT_EQ(a.case_index, b.case_index);
  }
}

TEST(PairClassification, RescalingDefiningFunctions) {
  const auto q = quadratic_phase_lagrangian(MixedCase::I, 1.3);
  const auto g = model_glancing_g();
  const auto base = pair_classification(q.f1, q.f2, g, origin);
  for (double c : {-2.0, 0.5, 3.0}) {
    const auto r = pair_classification(q.f1.scaled(c), q.f2.scaled(c), g, origin);
    EXPECT_LE((r.A - c * c * base.A).norm(), 1e-6 * c * c * (1 + base.A.norm()));
    EXPECT_LE((r.B - c * base.B).norm(), 1e-6 * std::abs(c) * (1 + base.B.norm()));
    EXPECT_NEAR(r.det_A, std::pow(c, 4) * base.det_A, 1e-5 * std::pow(c, 4) * (1 + base.A.squaredNorm()));
    EXPECT_EQ(r.case_index, base.case_index);
  }
}

TEST(PairClassification, PreconditionErrors) {
  const auto g = model_glancing_g();
  EXPECT_THROW(pair_classification(field("p2 - 1"), field("x2"), g, origin), NotGlancingError);
  // {g, p1} = 1
  EXPECT_THROW(pair_classification(field("p1"), field("x2 + p2"), g, origin), NotGlancingError);
  // {g, p2 + x1 + p1} = 1
  EXPECT_THROW(pair_classification(field("p1 + x2"), field("p2 + x1 + p1"), g, origin), NotGlancingError);
  // both brackets with g vanish but {x1, p1 + x2} = -1
  EXPECT_THROW(pair_classification(field("x1"), field("p1 + x2"), g, origin), NotLagrangianError);
}

TEST(ClassifyCase, FullSignTable) {
  auto M = [](double a, double b, double c) {
    Mat m(2, 2);
    m << a, b, b, c;
    return m;
  };
  const Eigen::Vector2d B1(1, 0), B0(0, 0);
  EXPECT_EQ(classify_case(M(1, 0, 1), B1, 1e-6), 1);
  EXPECT_EQ(classify_case(M(1, 0, 1), B0, 1e-6), 2);
  EXPECT_EQ(classify_case(M(1, 0, -1), B1, 1e-6), 3);
  EXPECT_EQ(classify_case(M(1, 0, -1), Eigen::Vector2d(1, 1), 1e-6), 4);
  EXPECT_EQ(classify_case(M(1, 0, -1), B0, 1e-6), 5);
  EXPECT_EQ(classify_case(M(1, 0, 0), B1, 1e-6), 6);
  EXPECT_EQ(classify_case(M(1, 0, 0), Eigen::Vector2d(0, 1), 1e-6), 7);
  EXPECT_EQ(classify_case(M(1, 0, 0), B0, 1e-6), 8);
  EXPECT_EQ(classify_case(M(0, 0, 0), B1, 1e-6), 9);
  EXPECT_EQ(classify_case(M(0, 0, 0), B0, 1e-6), 10);
  bool marginal = false;
  classify_case(M(1, 0, 5e-6), B1, 1e-6, &marginal);
  EXPECT_TRUE(marginal);
}
