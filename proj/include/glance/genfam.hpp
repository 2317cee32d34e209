#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/SVD>

#include "glance/errors.hpp"
#include "glance/flow.hpp"
#include "glance/manifolds.hpp"
#include "glance/phase_space.hpp"
#include "glance/symplectic.hpp"

namespace glance {

/// Phi(theta, x) with N fiber variables theta and d base variables x.
///
/// `gradient` returns the stacked (d_theta Phi, d_x Phi) of length N + d and
/// `hessian` the (N+d) x (N+d) second derivative in the same ordering. Both
/// fall back to central differences when absent.
struct GeneratingFamily {
  using ValueFn = std::function<double(const Vec& theta, const Vec& x)>;
  using GradFn = std::function<Vec(const Vec& theta, const Vec& x)>;
  using HessFn = std::function<Mat(const Vec& theta, const Vec& x)>;

  int N = 0;
  int d = 0;
  std::vector<std::string> theta_names;
  std::vector<std::string> base_names;
  ValueFn value;
  GradFn gradient_fn;
  HessFn hessian_fn;
  std::vector<Interval> theta_box;
  std::vector<double> theta_period;  // 0 where the variable is not periodic

  double operator()(const Vec& theta, const Vec& x) const {
    check(theta, x);
    return value(theta, x);
  }

  Vec gradient(const Vec& theta, const Vec& x) const {
    check(theta, x);
    if (gradient_fn) return gradient_fn(theta, x);
    Vec g(N + d);
    for (int j = 0; j < N + d; ++j) {
      Vec a = theta, b = theta, xa = x, xb = x;
      double s;
      if (j < N) {
        s = fd_step(theta[j]);
        a[j] += s;
        b[j] -= s;
      } else {
        s = fd_step(x[j - N]);
        xa[j - N] += s;
        xb[j - N] -= s;
      }
      g[j] = (value(a, xa) - value(b, xb)) / (2 * s);
    }
    return g;
  }

  Mat hessian(const Vec& theta, const Vec& x) const {
    check(theta, x);
    if (hessian_fn) return hessian_fn(theta, x);
    Mat H(N + d, N + d);
    for (int j = 0; j < N + d; ++j) {
      Vec a = theta, b = theta, xa = x, xb = x;
      double s;
      if (j < N) {
        s = 1e-5 * (1 + std::abs(theta[j]));
        a[j] += s;
        b[j] -= s;
      } else {
        s = 1e-5 * (1 + std::abs(x[j - N]));
        xa[j - N] += s;
        xb[j - N] -= s;
      }
      H.col(j) = (gradient(a, xa) - gradient(b, xb)) / (2 * s);
    }
    return 0.5 * (H + H.transpose());
  }

  Vec dtheta(const Vec& theta, const Vec& x) const { return gradient(theta, x).head(N); }
  Vec dx(const Vec& theta, const Vec& x) const { return gradient(theta, x).tail(d); }

 private:
  void check(const Vec& theta, const Vec& x) const {
    if (theta.size() != N || x.size() != d)
      throw DomainError("generating family: expected " + std::to_string(N) + " fiber and " + std::to_string(d) +
                        " base variables");
  }
};

// ---------------------------------------------------------------------------
// Phi_0 for the Bessel cylinder

/// Phi_0 = phi + lambda <omega(psi), x - phi omega(psi)>, theta = (lambda, phi, psi...).
inline double phi0(const Vec& theta, const Vec& x) {
  const Vec psi = theta.tail(theta.size() - 2);
  const Vec w = sphere_omega(psi);
  return theta[1] + theta[0] * w.dot(x - theta[1] * w);
}

inline GeneratingFamily phi0_family(int n) {
  GeneratingFamily f;
  f.N = n + 1;
  f.d = n;
  f.theta_names = {"lambda", "phi"};
  for (auto& s : sphere_param_names(n)) f.theta_names.push_back(s);
  f.base_names = spatial_variable_names(n);
  f.value = phi0;
  f.gradient_fn = [n](const Vec& th, const Vec& x) {
    const double lam = th[0], phi = th[1];
    const Vec psi = th.tail(n - 1);
    const Vec w = sphere_omega(psi);
    const Mat dw = sphere_dpsi(psi);
    Vec g(2 * n + 1);
    g[0] = w.dot(x) - phi;
    g[1] = 1 - lam;
    for (int j = 0; j < n - 1; ++j) g[2 + j] = lam * dw.col(j).dot(x);
    g.tail(n) = lam * w;
    return g;
  };
  f.hessian_fn = [n](const Vec& th, const Vec& x) {
    const double lam = th[0];
    const Vec psi = th.tail(n - 1);
    const Vec w = sphere_omega(psi);
    const Mat dw = sphere_dpsi(psi), d2w = sphere_d2psi(psi);
    const int N = n + 1;
    Mat H = Mat::Zero(N + n, N + n);
    H(0, 1) = H(1, 0) = -1.0;
    for (int j = 0; j < n - 1; ++j) {
      H(0, 2 + j) = H(2 + j, 0) = dw.col(j).dot(x);
      for (int k = 0; k < n - 1; ++k) H(2 + j, 2 + k) = lam * d2w.col(j * (n - 1) + k).dot(x);
      H.block(2 + j, N, 1, n) = lam * dw.col(j).transpose();
      H.block(N, 2 + j, n, 1) = lam * dw.col(j);
    }
    H.block(0, N, 1, n) = w.transpose();
    H.block(N, 0, n, 1) = w;
    return H;
  };
  f.theta_box = {{-10, 10}, {-10, 10}};
  f.theta_period = {0, 0};
  if (n == 2) {
    f.theta_box.push_back({0, 2 * std::numbers::pi});
    f.theta_period.push_back(2 * std::numbers::pi);
  } else {
    f.theta_box.push_back({0, std::numbers::pi});
    f.theta_box.push_back({0, 2 * std::numbers::pi});
    f.theta_period.push_back(0);
    f.theta_period.push_back(2 * std::numbers::pi);
  }
  return f;
}

// ---------------------------------------------------------------------------
// Families built from the flow-out of the cylinder

/// X, P and their first derivatives at (phi, psi, t) on the flow-out of the
/// Bessel cylinder.
struct BesselFlowJet {
  Vec X, P;
  Mat X_u, P_u;  // columns: d/dphi, d/dpsi_j
  Vec X_t, P_t;
  double E = 0.0;
  double action = 0.0;  // integral of p dx along the trajectory

  /// det(P, dP/dpsi_1, ..., dP/dpsi_{n-1})
  double det_P_Ppsi() const {
    Mat m(P.size(), P.size());
    m.col(0) = P;
    m.rightCols(P.size() - 1) = P_u.rightCols(P.size() - 1);
    return m.determinant();
  }
};

class BesselFlow {
 public:
  BesselFlow(Hamiltonian h, int n, double t_max, double max_step = 1e-2)
      : h_(std::move(h)), n_(n), fm_(std::make_shared<const FlowMap>(h_, t_max, max_step)) {}

  int n() const { return n_; }
  double t_max() const { return fm_->t_max(); }
  const Hamiltonian& hamiltonian() const { return h_; }

  BesselFlowJet jet(double phi, const Vec& psi, double t) const {
    const PhasePoint z0 = bessel_point(phi, psi);
    const FlowJet fj = fm_->with_tangents(z0, tangent_frame_bessel(phi, psi), t);
    BesselFlowJet j;
    j.X = fj.z.x;
    j.P = fj.z.p;
    j.X_u = fj.V.topRows(n_);
    j.P_u = fj.V.bottomRows(n_);
    j.X_t = h_.grad_p(j.X, j.P);
    j.P_t = -h_.grad_x(j.X, j.P);
    j.E = h_(z0);
    j.action = fj.action;
    return j;
  }

 private:
  Hamiltonian h_;
  int n_;
  std::shared_ptr<const FlowMap> fm_;
};

namespace detail {

// Gradient of Phi = phi + lambda <P, x - X> in (lambda, phi, psi..., x..., t).
inline Vec prop2_gradient(const BesselFlowJet& j, double lam, const Vec& x) {
  const auto n = j.X.size();
  const Vec r = x - j.X;
  Vec g(n + 1 + n + 1);
  g[0] = j.P.dot(r);
  for (Eigen::Index c = 0; c < n; ++c)
    g[1 + c] = (c == 0 ? 1.0 : 0.0) + lam * (j.P_u.col(c).dot(r) - j.P.dot(j.X_u.col(c)));
  g.segment(n + 1, n) = lam * j.P;
  g[2 * n + 1] = lam * (j.P_t.dot(r) - j.P.dot(j.X_t));
  return g;
}

inline void check_chart(const BesselFlowJet& j, double tol = 1e-8) {
  const double det = j.det_P_Ppsi();
  if (std::abs(det) < tol)
    throw ChartBreakdownError("det(P, dP/dpsi) = " + std::to_string(det) +
                              " vanishes here; the family does not generate the manifold at this point");
}

}  // namespace detail

/// The space-time family Phi(theta, x, t) = phi + lambda <P, x - X>(phi, psi, t),
/// theta = (lambda, phi, psi...), base variables (x..., t). Requires m = 1.
inline GeneratingFamily prop2_family(const Hamiltonian& h, int n, double t_max) {
  if (!h.degree() || *h.degree() != 1.0)
    throw PreconditionError("this generating family needs a Hamiltonian homogeneous of degree 1 in p");
  auto flow = std::make_shared<const BesselFlow>(h, n, t_max);
  GeneratingFamily f;
  f.N = n + 1;
  f.d = n + 1;
  f.theta_names = {"lambda", "phi"};
  for (auto& s : sphere_param_names(n)) f.theta_names.push_back(s);
  f.base_names = spatial_variable_names(n);
  f.base_names.push_back("t");
  auto jet_at = [flow, n](const Vec& th, double t) {
    auto j = flow->jet(th[1], th.tail(n - 1), t);
    detail::check_chart(j);
    return j;
  };
  f.value = [jet_at, n](const Vec& th, const Vec& xt) {
    const auto j = jet_at(th, xt[n]);
    return th[1] + th[0] * j.P.dot(xt.head(n) - j.X);
  };
  f.gradient_fn = [jet_at, n](const Vec& th, const Vec& xt) {
    return detail::prop2_gradient(jet_at(th, xt[n]), th[0], xt.head(n));
  };
  f.hessian_fn = [jet_at, n](const Vec& th, const Vec& xt) {
    const int M = 2 * n + 2;
    const double lam = th[0];
    const Vec x = xt.head(n);
    const auto j0 = jet_at(th, xt[n]);
    Mat H(M, M);
    // lambda and x enter linearly, so their columns need no new trajectories
    H.col(0) = detail::prop2_gradient(j0, 1.0, x) - detail::prop2_gradient(j0, 0.0, x);
    H(0, 0) = 0.0;
    for (int i = 0; i < n; ++i) {
      const double s = 1e-5 * (1 + std::abs(x[i]));
      Vec a = x, b = x;
      a[i] += s;
      b[i] -= s;
      H.col(n + 1 + i) = (detail::prop2_gradient(j0, lam, a) - detail::prop2_gradient(j0, lam, b)) / (2 * s);
    }
    // phi, psi and t columns by differences of jets
    for (int c = 1; c <= n; ++c) {
      const double s = 1e-5 * (1 + std::abs(th[c]));
      Vec a = th, b = th;
      a[c] += s;
      b[c] -= s;
      H.col(c) = (detail::prop2_gradient(jet_at(a, xt[n]), lam, x) - detail::prop2_gradient(jet_at(b, xt[n]), lam, x)) /
                 (2 * s);
    }
    const double s = 1e-5 * (1 + std::abs(xt[n]));
    H.col(M - 1) = (detail::prop2_gradient(jet_at(th, xt[n] + s), lam, x) -
                    detail::prop2_gradient(jet_at(th, xt[n] - s), lam, x)) /
                   (2 * s);
    return Mat(0.5 * (H + H.transpose()));
  };
  f.theta_box = {{-10, 10}, {-10, 10}};
  f.theta_period = {0, 0};
  if (n == 2) {
    f.theta_box.push_back({0, 2 * std::numbers::pi});
    f.theta_period.push_back(2 * std::numbers::pi);
  } else {
    f.theta_box.push_back({0, std::numbers::pi});
    f.theta_box.push_back({0, 2 * std::numbers::pi});
    f.theta_period.push_back(0);
    f.theta_period.push_back(2 * std::numbers::pi);
  }
  return f;
}

/// Phi_+^E(theta_+, x) = Phi(lambda, phi, psi, x, t) + E t with
/// theta_+ = (lambda, phi, psi..., t) and base variables x.
inline GeneratingFamily phi_plus_family(const Hamiltonian& h, int n, double E, double t_max) {
  const GeneratingFamily base = prop2_family(h, n, t_max);
  GeneratingFamily f;
  f.N = n + 2;
  f.d = n;
  f.theta_names = base.theta_names;
  f.theta_names.push_back("t");
  f.base_names = spatial_variable_names(n);
  auto split = [n](const Vec& tp, const Vec& x) {
    Vec th = tp.head(n + 1), xt(n + 1);
    xt << x, tp[n + 1];
    return std::make_pair(th, xt);
  };
  f.value = [base, split, E, n](const Vec& tp, const Vec& x) {
    auto [th, xt] = split(tp, x);
    return base(th, xt) + E * tp[n + 1];
  };
  // reorder (theta, x, t) -> (theta, t, x)
  auto perm = [n](int k) {  // index in the base ordering of entry k of the new ordering
    if (k <= n) return k;
    if (k == n + 1) return 2 * n + 1;
    return k - 1;
  };
  f.gradient_fn = [base, split, perm, E, n](const Vec& tp, const Vec& x) {
    auto [th, xt] = split(tp, x);
    const Vec g0 = base.gradient(th, xt);
    Vec g(2 * n + 2);
    for (int k = 0; k < 2 * n + 2; ++k) g[k] = g0[perm(k)];
    g[n + 1] += E;
    return g;
  };
  f.hessian_fn = [base, split, perm, n](const Vec& tp, const Vec& x) {
    auto [th, xt] = split(tp, x);
    const Mat H0 = base.hessian(th, xt);
    Mat H(2 * n + 2, 2 * n + 2);
    for (int a = 0; a < 2 * n + 2; ++a)
      for (int b = 0; b < 2 * n + 2; ++b) H(a, b) = H0(perm(a), perm(b));
    return H;
  };
  f.theta_box = base.theta_box;
  f.theta_box.push_back({0.0, t_max});
  f.theta_period = base.theta_period;
  f.theta_period.push_back(0.0);
  return f;
}

/// Verifies that z0 = bessel_point(phi0, psi0) is not glancing for H at the
/// energy E = H(z0) before a Phi_+^E family is used near it.
inline void require_non_glancing(const Hamiltonian& h, double phi0, const Vec& psi0, double tol = 1e-6) {
  const PhasePoint z = bessel_point(phi0, psi0);
  const Vec gx = h.grad_x(z.x, z.p), gp = h.grad_p(z.x, z.p);
  const auto n = z.dim();
  Vec r(n + 1);
  r.head(n) = gp + phi0 * gx - gp.dot(z.p) * z.p;
  r[n] = -gx.dot(z.p);
  if (r.norm() <= tol)
    throw PreconditionError("the starting point is glancing; the energy family does not apply there (see normal_form)");
}

// ---------------------------------------------------------------------------
// Critical sets

struct CriticalPoint {
  Vec theta;
  Vec x;
  Vec p;                   // d_x Phi at the point
  double residual = 0.0;   // |d_theta Phi|
  bool rank_ok = true;     // (Phi_theta_theta, Phi_theta_x) has rank N
  bool degenerate = false; // Phi_theta_theta singular: caustic point of the family
};

struct CriticalSolveOptions {
  double tol = 1e-12;
  int max_iter = 50;
  double dedupe = 1e-6;
  int seeds_per_dim = 3;
};

namespace detail {

inline double wrapped_distance(const Vec& a, const Vec& b, const std::vector<double>& period) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    if (i < static_cast<Eigen::Index>(period.size()) && period[i] > 0) d = std::remainder(d, period[i]);
    s += d * d;
  }
  return std::sqrt(s);
}

inline std::vector<Vec> default_seeds(const GeneratingFamily& f, int per_dim) {
  std::vector<Vec> out;
  std::vector<int> idx(f.N, 0);
  for (;;) {
    Vec s(f.N);
    for (int j = 0; j < f.N; ++j) {
      const Interval iv = f.theta_box[j];
      s[j] = iv.lo + iv.width() * (idx[j] + 0.5) / per_dim;
    }
    out.push_back(s);
    int j = 0;
    while (j < f.N && ++idx[j] == per_dim) idx[j++] = 0;
    if (j == f.N) break;
  }
  return out;
}

}  // namespace detail

/// Newton-polished roots of d_theta Phi(., x) = 0 from the given seeds (or a
/// default grid over the theta box). Roots outside the box are dropped.
inline std::vector<CriticalPoint> critical_set_solve(const GeneratingFamily& f, const Vec& x,
                                                     std::vector<Vec> seeds = {},
                                                     const CriticalSolveOptions& opt = {}) {
  if (seeds.empty()) seeds = detail::default_seeds(f, opt.seeds_per_dim);
  std::vector<CriticalPoint> out;
  const int N = f.N;
  for (const Vec& s : seeds) {
    Vec th = s;
    bool ok = false;
    try {
      Vec g = f.dtheta(th, x);
      for (int it = 0; it < opt.max_iter; ++it) {
        if (g.norm() <= opt.tol) {
          ok = true;
          break;
        }
        const Mat H = f.hessian(th, x).topLeftCorner(N, N);
        Vec step = H.fullPivLu().solve(-g);
        if (!step.allFinite() || (H * step + g).norm() > 1e-6 * (1 + g.norm()))
          step = H.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(-g);
        double lam = 1.0;
        Vec trial, gt;
        bool accepted = false;
        while (lam > 1e-6) {
          trial = th + lam * step;
          try {
            gt = f.dtheta(trial, x);
            if (gt.norm() < g.norm() || gt.norm() <= opt.tol) {
              accepted = true;
              break;
            }
          } catch (const ChartBreakdownError&) {
          }
          lam *= 0.5;
        }
        if (!accepted) break;
        th = trial;
        g = gt;
      }
      if (!ok && g.norm() <= opt.tol) ok = true;
    } catch (const ChartBreakdownError&) {
      ok = false;
    }
    if (!ok) continue;
    for (int j = 0; j < N; ++j) {
      if (j < static_cast<int>(f.theta_period.size()) && f.theta_period[j] > 0) {
        const double P = f.theta_period[j];
        th[j] -= P * std::floor((th[j] - f.theta_box[j].lo) / P);
      }
    }
    bool inside = true;
    for (int j = 0; j < N; ++j)
      if (th[j] < f.theta_box[j].lo - 1e-9 || th[j] > f.theta_box[j].hi + 1e-9) inside = false;
    if (!inside) continue;
    bool dup = false;
    for (const auto& c : out)
      if (detail::wrapped_distance(c.theta, th, f.theta_period) < opt.dedupe) dup = true;
    if (dup) continue;

    CriticalPoint cp;
    cp.theta = th;
    cp.x = x;
    const Vec g = f.gradient(th, x);
    cp.residual = g.head(N).norm();
    cp.p = g.tail(f.d);
    const Mat H = f.hessian(th, x);
    Eigen::JacobiSVD<Mat> svd(H.topRows(N));
    const auto& sv = svd.singularValues();
    cp.rank_ok = sv[N - 1] >= 1e-6 * sv[0];
    Eigen::JacobiSVD<Mat> svt(H.topLeftCorner(N, N));
    cp.degenerate = svt.singularValues()[N - 1] < 1e-8 * std::max(1.0, svt.singularValues()[0]);
    out.push_back(cp);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Invariant density

/// Functions y_1..y_d on a neighborhood of C_Phi, with their Jacobian
/// with respect to (x, theta).
struct DensityCoordinates {
  std::function<Vec(const Vec& theta, const Vec& x)> y;
  std::function<Mat(const Vec& theta, const Vec& x)> jacobian;  // d x (d + N), columns (x, theta)
};

/// y = (phi, psi..., t) read off theta and the base t for the space-time family.
inline DensityCoordinates prop2_density_coordinates(int n) {
  DensityCoordinates c;
  c.y = [n](const Vec& th, const Vec& xt) {
    Vec y(n + 1);
    y.head(n) = th.segment(1, n);
    y[n] = xt[n];
    return y;
  };
  c.jacobian = [n](const Vec&, const Vec&) {
    const int d = n + 1, N = n + 1;
    Mat J = Mat::Zero(d, d + N);
    for (int i = 0; i < n; ++i) J(i, d + 1 + i) = 1.0;  // theta_{1+i}
    J(n, n) = 1.0;                                      // base t
    return J;
  };
  return c;
}

/// The second extension y_1 = phi + kappa x_1 d_lambda Phi, which agrees with
/// the first one on C_Phi only.
inline DensityCoordinates perturbed_density_coordinates(const GeneratingFamily& f, int n, double kappa) {
  auto base = prop2_density_coordinates(n);
  DensityCoordinates c;
  c.y = [f, base, kappa](const Vec& th, const Vec& xt) {
    Vec y = base.y(th, xt);
    y[0] += kappa * xt[0] * f.dtheta(th, xt)[0];
    return y;
  };
  c.jacobian = [f, base, kappa](const Vec& th, const Vec& xt) {
    Mat J = base.jacobian(th, xt);
    const Mat H = f.hessian(th, xt);
    const int N = f.N, d = f.d;
    const double m = f.dtheta(th, xt)[0];
    // columns in (x, theta) order
    J.block(0, 0, 1, d) += kappa * xt[0] * H.block(0, N, 1, d);
    J.block(0, d, 1, N) += kappa * xt[0] * H.block(0, 0, 1, N);
    J(0, 0) += kappa * m;
    return J;
  };
  return c;
}

/// F[Phi, dy] = det of the Jacobian of (y, d_theta Phi) with respect to (x, theta).
inline double invariant_density(const GeneratingFamily& f, const DensityCoordinates& y, const Vec& theta,
                                const Vec& x) {
  const int N = f.N, d = f.d;
  Mat J(d + N, d + N);
  J.topRows(d) = y.jacobian(theta, x);
  const Mat H = f.hessian(theta, x);
  J.block(d, 0, N, d) = H.block(0, N, N, d);
  J.block(d, d, N, N) = H.topLeftCorner(N, N);
  const double det = Eigen::FullPivLU<Mat>(J).determinant();
  double scale = 1.0;
  for (int i = 0; i < d + N; ++i) scale *= std::max(1e-300, J.row(i).norm());
  if (std::abs(det) <= 1e-10 * scale)
    throw DensityDegenerateError("invariant density vanishes (|det| = " + std::to_string(std::abs(det)) + ")");
  return det;
}

/// Point of C_Phi for the space-time family over chart parameters (phi, psi, t):
/// theta = (1, phi, psi), base = (X, t).
inline std::pair<Vec, Vec> prop2_chart_point(const BesselFlow& flow, double phi, const Vec& psi, double t) {
  const auto j = flow.jet(phi, psi, t);
  const auto n = j.X.size();
  Vec th(n + 1), xt(n + 1);
  th << 1.0, phi, psi;
  xt << j.X, t;
  return {th, xt};
}

/// Reduced (theta-free) phase for the cylinder away from its focal point:
/// S(x) = sign * |x|, whose gradient x/|x| reproduces omega on the sheet phi * sign > 0.
inline double reduced_bessel_phase(const Vec& x, double sign) {
  if (x.norm() == 0.0) throw DomainError("reduced phase is singular at x = 0 (projection of the cylinder has a focus)");
  return sign >= 0 ? x.norm() : -x.norm();
}

}  // namespace glance
