#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "glance/errors.hpp"
#include "glance/manifolds.hpp"
#include "glance/phase_space.hpp"
#include "glance/polynomial.hpp"
#include "glance/symplectic.hpp"

namespace glance {

// ---------------------------------------------------------------------------
// H restricted to the Bessel cylinder

/// H(phi omega(psi), omega(psi)).
inline double cylinder_energy(const Hamiltonian& h, double phi, const Vec& psi) {
  return h(bessel_point(phi, psi));
}

/// Chain-rule gradient of (phi, psi) -> H(phi omega, omega):
/// d/dphi = <dH/dx, omega>, d/dpsi_j = phi <dH/dx, d_j omega> + <dH/dp, d_j omega>.
inline Vec cylinder_gradient(const Hamiltonian& h, double phi, const Vec& psi) {
  const PhasePoint z = bessel_point(phi, psi);
  const Vec gx = h.grad_x(z.x, z.p), gp = h.grad_p(z.x, z.p);
  const Mat d = sphere_dpsi(psi);
  Vec g(psi.size() + 1);
  g[0] = gx.dot(z.p);
  for (Eigen::Index j = 0; j < psi.size(); ++j) g[j + 1] = phi * gx.dot(d.col(j)) + gp.dot(d.col(j));
  return g;
}

/// Central-difference gradient of the same function, used as a cross-check.
inline Vec cylinder_gradient_fd(const Hamiltonian& h, double phi, const Vec& psi) {
  Vec u(psi.size() + 1);
  u << phi, psi;
  Vec g(u.size());
  for (Eigen::Index j = 0; j < u.size(); ++j) {
    const double s = fd_step(u[j]);
    Vec a = u, b = u;
    a[j] += s;
    b[j] -= s;
    g[j] = (cylinder_energy(h, a[0], a.tail(psi.size())) - cylinder_energy(h, b[0], b.tail(psi.size()))) / (2 * s);
  }
  return g;
}

/// Residual of the glancing system at bessel_point(phi, psi):
///   dH/dp + phi dH/dx - m H omega   (n components)
///   <-dH/dx, omega>                 (1 component)
///   H - E                           (1 component)
inline Vec glancing_residual(const Hamiltonian& h, double phi, const Vec& psi, double E) {
  if (!h.degree())
    throw UnsupportedError("glancing_residual needs a declared homogeneity degree; use tangency_residual instead");
  const double m = *h.degree();
  const PhasePoint z = bessel_point(phi, psi);
  const Vec gx = h.grad_x(z.x, z.p), gp = h.grad_p(z.x, z.p);
  const double H = h(z);
  const auto n = z.dim();
  Vec r(n + 2);
  r.head(n) = gp + phi * gx - m * H * z.p;
  r[n] = -gx.dot(z.p);
  r[n + 1] = H - E;
  return r;
}

inline Vec glancing_residual(const Hamiltonian& h, double phi, double psi, double E) {
  return glancing_residual(h, phi, Vec::Constant(1, psi), E);
}

/// Energy-free tangency test: v_H(z) lies in T_z Lambda0 iff both blocks vanish.
///   dH/dp + phi dH/dx - <dH/dp, omega> omega   (n components)
///   <-dH/dx, omega>                            (1 component)
inline Vec tangency_residual(const Hamiltonian& h, double phi, const Vec& psi) {
  const PhasePoint z = bessel_point(phi, psi);
  const Vec gx = h.grad_x(z.x, z.p), gp = h.grad_p(z.x, z.p);
  const auto n = z.dim();
  Vec r(n + 1);
  r.head(n) = gp + phi * gx - gp.dot(z.p) * z.p;
  r[n] = -gx.dot(z.p);
  return r;
}

inline Vec tangency_residual(const Hamiltonian& h, double phi, double psi) {
  return tangency_residual(h, phi, Vec::Constant(1, psi));
}

/// Glancing criterion for H = |p|^m / rho at x = phi omega(psi): either
/// phi != 0 and grad rho = 0, or phi = 0 and <grad rho(0), omega> = 0.
inline bool conformal_glancing_test(const Polynomial& rho, double phi, const Vec& psi, double tol = 1e-9) {
  const Vec w = sphere_omega(psi);
  const Vec x = phi * w;
  if (!(rho(x) > 0)) throw DomainError("conformal_glancing_test: rho must be positive at the point");
  const Vec g = rho.gradient(x);
  if (std::abs(phi) > tol) return g.norm() <= tol;
  return std::abs(g.dot(w)) <= tol;
}

inline bool conformal_glancing_test(const Polynomial& rho, double phi, double psi, double tol = 1e-9) {
  return conformal_glancing_test(rho, phi, Vec::Constant(1, psi), tol);
}

enum class GlancingKind { min, max, saddle, degenerate, non_glancing };

inline std::string to_string(GlancingKind k) {
  switch (k) {
    case GlancingKind::min: return "min";
    case GlancingKind::max: return "max";
    case GlancingKind::saddle: return "saddle";
    case GlancingKind::degenerate: return "degenerate";
    case GlancingKind::non_glancing: return "non-glancing";
  }
  return "?";
}

struct GlancingReport {
  PhasePoint z;
  double phi = 0.0;
  Vec psi;
  double E0 = 0.0;
  Vec gradient;
  Mat hessian;
  GlancingKind kind = GlancingKind::non_glancing;

  double det() const { return hessian.determinant(); }
  double trace() const { return hessian.trace(); }
};

/// Hessian of (phi, psi) -> H(phi omega, omega) by central differences of the
/// chain-rule gradient, symmetrized.
inline Mat cylinder_hessian(const Hamiltonian& h, double phi, const Vec& psi) {
  Vec u(psi.size() + 1);
  u << phi, psi;
  const auto k = u.size();
  Mat H(k, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const double s = 1e-5 * (1 + std::abs(u[j]));
    Vec a = u, b = u;
    a[j] += s;
    b[j] -= s;
    H.col(j) = (cylinder_gradient(h, a[0], a.tail(k - 1)) - cylinder_gradient(h, b[0], b.tail(k - 1))) / (2 * s);
  }
  return 0.5 * (H + H.transpose());
}

inline GlancingKind classify_hessian(const Mat& H, double energy_scale) {
  const double norm = H.norm();
  if (norm <= 1e-8 * (1 + std::abs(energy_scale))) return GlancingKind::degenerate;
  Eigen::SelfAdjointEigenSolver<Mat> es(H);
  const double thr = 1e-5 * norm;
  int pos = 0, neg = 0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const double l = es.eigenvalues()[i];
    if (l > thr)
      ++pos;
    else if (l < -thr)
      ++neg;
    else
      return GlancingKind::degenerate;
  }
  if (neg == 0) return GlancingKind::min;
  if (pos == 0) return GlancingKind::max;
  return GlancingKind::saddle;
}

/// Restricted Hessian report at a glancing point of the cylinder.
inline GlancingReport restricted_hessian(const Hamiltonian& h, double phi, const Vec& psi, double grad_tol = 1e-7) {
  GlancingReport r;
  r.z = bessel_point(phi, psi);
  r.phi = phi;
  r.psi = psi;
  r.E0 = h(r.z);
  r.gradient = cylinder_gradient(h, phi, psi);
  if (r.gradient.norm() > grad_tol * (1 + std::abs(r.E0)))
    throw PreconditionError("restricted_hessian: (phi, psi) is not a critical point of H on the cylinder (|grad| = " +
                            std::to_string(r.gradient.norm()) + ")");
  r.hessian = cylinder_hessian(h, phi, psi);
  r.kind = classify_hessian(r.hessian, r.E0);
  return r;
}

inline GlancingReport restricted_hessian(const Hamiltonian& h, double phi, double psi, double grad_tol = 1e-7) {
  return restricted_hessian(h, phi, Vec::Constant(1, psi), grad_tol);
}

struct GlancingSearchOptions {
  double phi_min = -2.0, phi_max = 2.0;
  int phi_nodes = 41, psi_nodes = 48;
  double grad_tol = 1e-10;
  double dedupe = 1e-4;
};

/// Critical points of H on the n = 2 cylinder inside the phi range: coarse
/// grid, then damped Newton on grad = 0 from every grid local minimum of |grad|.
inline std::vector<GlancingReport> glancing_search(const Hamiltonian& h, const GlancingSearchOptions& opt = {}) {
  const double two_pi = 2 * std::numbers::pi;
  const int P = opt.phi_nodes, Q = opt.psi_nodes;
  std::vector<double> gn(static_cast<std::size_t>(P * Q));
  auto phi_at = [&](int i) { return opt.phi_min + (opt.phi_max - opt.phi_min) * i / (P - 1); };
  auto psi_at = [&](int j) { return two_pi * j / Q; };
  for (int i = 0; i < P; ++i)
    for (int j = 0; j < Q; ++j) gn[i * Q + j] = cylinder_gradient(h, phi_at(i), Vec::Constant(1, psi_at(j))).norm();

  std::vector<GlancingReport> out;
  auto wrap = [&](double a) { return a - two_pi * std::floor(a / two_pi); };
  for (int i = 0; i < P; ++i)
    for (int j = 0; j < Q; ++j) {
      const double v = gn[i * Q + j];
      bool local_min = true;
      for (int di = -1; di <= 1 && local_min; ++di)
        for (int dj = -1; dj <= 1; ++dj) {
          if (!di && !dj) continue;
          const int ii = i + di;
          if (ii < 0 || ii >= P) continue;
          const int jj = (j + dj + Q) % Q;
          if (gn[ii * Q + jj] < v) {
            local_min = false;
            break;
          }
        }
      if (!local_min) continue;
      Eigen::Vector2d u(phi_at(i), psi_at(j));
      bool ok = false;
      for (int it = 0; it < 60; ++it) {
        const Vec g = cylinder_gradient(h, u[0], Vec::Constant(1, u[1]));
        if (g.norm() <= opt.grad_tol) {
          ok = true;
          break;
        }
        const Mat H = cylinder_hessian(h, u[0], Vec::Constant(1, u[1]));
        Vec step = H.fullPivLu().solve(-g);
        if (!step.allFinite()) break;
        double lam = 1.0;
        while (lam > 1e-4) {
          const Eigen::Vector2d t = u + lam * step;
          if (cylinder_gradient(h, t[0], Vec::Constant(1, t[1])).norm() < g.norm()) break;
          lam *= 0.5;
        }
        u += lam * step;
      }
      if (!ok) continue;
      if (u[0] < opt.phi_min - 1e-9 || u[0] > opt.phi_max + 1e-9) continue;
      u[1] = wrap(u[1]);
      bool dup = false;
      for (const auto& r : out) {
        const double dpsi = std::abs(std::remainder(r.psi[0] - u[1], two_pi));
        if (std::hypot(r.phi - u[0], dpsi) < opt.dedupe) dup = true;
      }
      if (dup) continue;
      out.push_back(restricted_hessian(h, u[0], Vec::Constant(1, u[1]), 1e-6));
    }
  return out;
}

// ---------------------------------------------------------------------------
// Pairs (Lambda, G) of glancing type

struct PairClassification {
  Mat A;
  Vec B;
  double det_A = 0.0;
  double tBAB = 0.0;
  double asymmetry = 0.0;  // |A12 - A21| before symmetrization
  int case_index = 0;
  bool marginal = false;
  double tol = 0.0;
};

/// Case index 1..10 from (A, B) with the zero tests scaled by tol.
inline int classify_case(const Mat& A, const Vec& B, double tol, bool* marginal = nullptr) {
  const double na = A.norm(), nb = B.norm();
  const double det = A.determinant(), q = B.dot(A * B);
  const double tA = tol * (1 + na), tB = tol * (1 + nb);
  const double tDet = tol * (1 + na) * (1 + na), tQ = tol * (1 + na) * (1 + nb) * (1 + nb);
  bool m = false;
  auto zero = [&m](double v, double t) {
    const double a = std::abs(v);
    if (a > t && a <= 10 * t) m = true;
    return a <= t;
  };
  const bool A0 = zero(na, tA), B0 = zero(nb, tB), D0 = zero(det, tDet), Q0 = zero(q, tQ);
  int c;
  if (A0)
    c = B0 ? 10 : 9;
  else if (!D0 && det > 0)
    c = B0 ? 2 : 1;
  else if (!D0)
    c = !Q0 ? 3 : (B0 ? 5 : 4);
  else if (!Q0)
    c = 6;
  else
    c = B0 ? 8 : 7;
  if (marginal) *marginal = m;
  return c;
}

/// A_z, B_z and the case index of the pair Lambda = {f1 = f2 = 0}, G = {g = 0}
/// at z. Checks the glancing-pair conditions first.
inline PairClassification pair_classification(const ScalarField& f1, const ScalarField& f2, const ScalarField& g,
                                              const PhasePoint& z, double tol = 1e-6,
                                              BracketSign sign = BracketSign::standard, double pre_tol = 1e-7) {
  if (z.dim() != 2) throw UnsupportedError("pair_classification is implemented for n = 2");
  const double c[5] = {g(z), f1(z), f2(z), poisson_bracket(g, f1, z, sign), poisson_bracket(g, f2, z, sign)};
  const char* names[5] = {"g(z)", "f1(z)", "f2(z)", "{g,f1}(z)", "{g,f2}(z)"};
  for (int i = 0; i < 5; ++i)
    if (std::abs(c[i]) > pre_tol)
      throw NotGlancingError(std::string("glancing-pair condition violated: ") + names[i] + " = " +
                             std::to_string(c[i]));
  const double b12 = poisson_bracket(f1, f2, z, sign);
  if (std::abs(b12) > pre_tol) throw NotLagrangianError("{f1,f2}(z) = " + std::to_string(b12) + " is not zero");

  PairClassification r;
  r.tol = tol;
  r.A.resize(2, 2);
  r.A(0, 0) = iterated_bracket({&f2, &f2, &g}, z, sign);
  r.A(0, 1) = -iterated_bracket({&f1, &f2, &g}, z, sign);
  r.A(1, 0) = -iterated_bracket({&f2, &f1, &g}, z, sign);
  r.A(1, 1) = iterated_bracket({&f1, &f1, &g}, z, sign);
  r.asymmetry = std::abs(r.A(0, 1) - r.A(1, 0));
  r.A = 0.5 * (r.A + r.A.transpose()).eval();
  r.B.resize(2);
  r.B[0] = iterated_bracket({&g, &g, &f1}, z, sign);
  r.B[1] = iterated_bracket({&g, &g, &f2}, z, sign);
  r.det_A = r.A.determinant();
  r.tBAB = r.B.dot(r.A * r.B);
  r.case_index = classify_case(r.A, r.B, tol, &r.marginal);
  return r;
}

/// g = p1^2 - x1 - p2, the model energy surface in glancing coordinates.
inline ScalarField model_glancing_g() {
  return ScalarField::from_polynomial(Polynomial::parse("p1^2 - x1 - p2", {"x1", "x2", "p1", "p2"}));
}

enum class MixedCase { I, II, III, IV };

inline MixedCase parse_mixed_case(const std::string& s) {
  if (s == "I") return MixedCase::I;
  if (s == "II") return MixedCase::II;
  if (s == "III") return MixedCase::III;
  if (s == "IV") return MixedCase::IV;
  throw ConfigError("unknown mixed-representation case '" + s + "' (expected I, II, III or IV)");
}

struct QuadraticPhaseLagrangian {
  ScalarField f1, f2;
  Polynomial f1_poly, f2_poly;
  Mat tangent_basis;       // 4 x 2, columns span T_0 Lambda
  bool transversal = false;  // T_0 Lambda meets (T_0 F)^sigma = R d/dp1 only in 0
};

namespace detail {

inline QuadraticPhaseLagrangian finish_quadratic(const std::string& f1, const std::string& f2) {
  QuadraticPhaseLagrangian q;
  const std::vector<std::string> names{"x1", "x2", "p1", "p2"};
  q.f1_poly = Polynomial::parse(f1, names);
  q.f2_poly = Polynomial::parse(f2, names);
  q.f1 = ScalarField::from_polynomial(q.f1_poly);
  q.f2 = ScalarField::from_polynomial(q.f2_poly);
  // T_0 Lambda = kernel of the differentials of f1, f2 (both affine)
  Mat D(2, 4);
  const Vec zero = Vec::Zero(4);
  D.row(0) = q.f1_poly.gradient(zero).transpose();
  D.row(1) = q.f2_poly.gradient(zero).transpose();
  Eigen::FullPivLU<Mat> lu(D);
  q.tangent_basis = lu.kernel();
  // F = {x1 = 0}: its symplectic orthogonal is spanned by the p1 direction
  Mat M(4, 3);
  M.leftCols(2) = q.tangent_basis;
  M.col(2) = Eigen::Vector4d(0, 0, 1, 0);
  Eigen::JacobiSVD<Mat> svd(M);
  const auto& s = svd.singularValues();
  q.transversal = q.tangent_basis.cols() == 2 && s[2] > 1e-10 * s[0];
  return q;
}

inline std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << '(' << v << ')';
  return os.str();
}

}  // namespace detail

/// Defining functions of the quadratic-phase manifolds in the mixed
/// representations I, II, III (one parameter each).
inline QuadraticPhaseLagrangian quadratic_phase_lagrangian(MixedCase c, double param) {
  if (param == 0.0) throw DegenerateFamilyError("quadratic phase parameter must be nonzero");
  const std::string a = detail::num(param);
  switch (c) {
    case MixedCase::I:  // phi0(x) = (a x1^2 - 2 x1 x2)/2, p = d_x phi0
      return detail::finish_quadratic("p1 - " + a + "*x1 + x2", "p2 + x1");
    case MixedCase::II:  // phi0(xi) = (2 xi1 xi2 + c xi2^2)/2, x = -d_xi phi0
      return detail::finish_quadratic("x1 + p2", "x2 + p1 + " + a + "*p2");
    case MixedCase::III:  // phi0(x2, xi1) = b (xi1 + x2)^2 / 2
      return detail::finish_quadratic("x1 + " + a + "*(p1 + x2)", "p2 - " + a + "*(p1 + x2)");
    case MixedCase::IV:
      throw UnsupportedError("case IV has no one-parameter family; use quadratic_phase_case_iv");
  }
  throw UnsupportedError("unknown case");
}

/// Representation IV, p1 = d_{x1} phi, x2 = -d_{xi2} phi, with the general
/// quadratic phi(x1, xi2) = (alpha x1^2 + 2 beta x1 xi2 + gamma xi2^2)/2.
inline QuadraticPhaseLagrangian quadratic_phase_case_iv(double alpha, double beta, double gamma) {
  using detail::num;
  return detail::finish_quadratic("p1 - " + num(alpha) + "*x1 - " + num(beta) + "*p2",
                                  "x2 + " + num(beta) + "*x1 + " + num(gamma) + "*p2");
}

/// Does the pair (Lambda, G) built from these defining functions glance at 0
/// with Lambda transverse to F?
inline bool admissible_glancing_pair(const QuadraticPhaseLagrangian& q, double tol = 1e-9) {
  if (!q.transversal) return false;
  const PhasePoint z(Vec::Zero(2), Vec::Zero(2));
  const auto g = model_glancing_g();
  return std::abs(g(z)) <= tol && std::abs(q.f1(z)) <= tol && std::abs(q.f2(z)) <= tol &&
         std::abs(poisson_bracket(g, q.f1, z)) <= tol && std::abs(poisson_bracket(g, q.f2, z)) <= tol;
}

}  // namespace glance
