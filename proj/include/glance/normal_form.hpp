#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <boost/math/tools/roots.hpp>

#include "glance/errors.hpp"
#include "glance/flow.hpp"
#include "glance/glancing.hpp"
#include "glance/hamiltonians.hpp"
#include "glance/integrator.hpp"
#include "glance/manifolds.hpp"
#include "glance/phase_space.hpp"
#include "glance/symplectic.hpp"

namespace glance {

// ---------------------------------------------------------------------------
// Cusp normal form

/// Point of T*R^3_{xi, eta, tau} (with tau paired to -eps) in the normal form.
struct NormalCoordinates {
  double p_xi = 0.0, p_eta = 0.0, eps = 0.0;
  double xi = 0.0, eta = 0.0, tau = 0.0;

  /// (xi, eta, tau, p_xi, p_eta, -eps): positions then momenta.
  Vec stacked() const {
    Vec z(6);
    z << xi, eta, tau, p_xi, p_eta, -eps;
    return z;
  }
};

struct NormalFormPoint {
  NormalCoordinates c;
  double S = 0.0;
};

/// S = -(tau^3 / 3 + xi^2 tau), p_xi = dS/dxi, p_eta = dS/deta, eps = -dS/dtau.
inline double normal_form_phase(double xi, double, double tau) { return -(tau * tau * tau / 3 + xi * xi * tau); }

inline NormalFormPoint normal_form_manifold(double xi, double eta, double tau) {
  NormalFormPoint p;
  p.S = normal_form_phase(xi, eta, tau);
  p.c.xi = xi;
  p.c.eta = eta;
  p.c.tau = tau;
  p.c.p_xi = -2 * xi * tau;
  p.c.p_eta = 0.0;
  p.c.eps = tau * tau + xi * xi;
  return p;
}

/// Residuals of the three defining identities.
inline Eigen::Vector3d normal_form_identities(const NormalCoordinates& c) {
  return {c.p_xi - (-2 * c.xi * c.tau), c.p_eta, c.eps - (c.tau * c.tau + c.xi * c.xi)};
}

/// Points (xi, tau) of the circle tau^2 + xi^2 = eps on the normal-form manifold.
inline std::vector<NormalFormPoint> normal_form_circle(double eps, int samples, double eta = 0.0) {
  if (eps < 0) return {};
  std::vector<NormalFormPoint> out;
  const double r = std::sqrt(eps);
  for (int k = 0; k < samples; ++k) {
    const double a = 2 * std::numbers::pi * k / samples;
    out.push_back(normal_form_manifold(r * std::cos(a), eta, r * std::sin(a)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// The worked example: H = p_y, S0 = x^2 y + y^3 / 3

/// Point of T*R^3_{x, y, t} with t paired to -E.
struct SpaceTimeCoordinates {
  double px = 0.0, py = 0.0, E = 0.0;
  double x = 0.0, y = 0.0, t = 0.0;

  Vec stacked() const {
    Vec z(6);
    z << x, y, t, px, py, -E;
    return z;
  }
  static SpaceTimeCoordinates from_stacked(const Vec& z) {
    return {z[3], z[4], -z[5], z[0], z[1], z[2]};
  }
};

inline NormalCoordinates example_canonical_map(const SpaceTimeCoordinates& s, double T) {
  NormalCoordinates c;
  c.p_xi = s.px;
  c.p_eta = s.py - s.E;
  c.eps = s.E;
  c.xi = s.x;
  c.eta = s.y - T;
  c.tau = s.t - s.y;
  return c;
}

/// Point of the example manifold over (x, y, t): S = x^2 (y - t) + (y - t)^3 / 3,
/// p = dS/dx, E = -dS/dt.
inline SpaceTimeCoordinates example_manifold_point(double x, double y, double t) {
  const double s = y - t;
  SpaceTimeCoordinates z;
  z.x = x;
  z.y = y;
  z.t = t;
  z.px = 2 * x * s;
  // written in the order tau^2 + xi^2 is evaluated on the normal-form side
  z.py = s * s + x * x;
  z.E = s * s + x * x;
  return z;
}

inline double example_phase(double x, double y, double t) {
  const double s = y - t;
  return x * x * s + s * s * s / 3;
}

/// Central-difference Jacobian of the example map in stacked coordinates. The
/// map is affine, so the difference quotient has no truncation error and a
/// large step only shrinks the rounding error.
inline Mat example_map_jacobian(const SpaceTimeCoordinates& s, double T, double step = 1e-3) {
  const Vec z = s.stacked();
  Mat J(6, 6);
  for (int j = 0; j < 6; ++j) {
    Vec a = z, b = z;
    a[j] += step;
    b[j] -= step;
    J.col(j) = (example_canonical_map(SpaceTimeCoordinates::from_stacked(a), T).stacked() -
                example_canonical_map(SpaceTimeCoordinates::from_stacked(b), T).stacked()) /
               (2 * step);
  }
  return J;
}

/// max |J^T Omega J - Omega| for the example map.
inline double example_symplectic_defect(const SpaceTimeCoordinates& s, double T) {
  const Mat J = example_map_jacobian(s, T);
  const Mat O = symplectic_matrix(3);
  return (J.transpose() * O * J - O).cwiseAbs().maxCoeff();
}

// projections of T*R^3_{x,y,t} with the E coordinate
inline Eigen::Vector3d pi_t(const SpaceTimeCoordinates& s) { return {s.x, s.y, s.t}; }
inline Eigen::Vector3d pi_E(const SpaceTimeCoordinates& s) { return {s.x, s.y, s.E}; }
inline Eigen::Vector3d pi_E(const NormalCoordinates& c) { return {c.xi, c.eta, c.eps}; }

// ---------------------------------------------------------------------------
// Caustics

/// det of d X / d u for a chart whose parameter count equals the base dimension.
inline double x_projection_jacobian(const ManifoldChart& chart, const Vec& u) {
  const Mat T = chart.tangent(u);
  const int N = static_cast<int>(T.rows() / 2);
  if (N != chart.dim()) throw PreconditionError("caustic test needs as many chart parameters as base variables");
  return T.topRows(N).determinant();
}

inline bool is_caustic(const ManifoldChart& chart, const Vec& u, double tol = 1e-8) {
  return std::abs(x_projection_jacobian(chart, u)) <= tol;
}

// ---------------------------------------------------------------------------
// Transition of loc Lambda_+^E through a glancing energy

enum class Regime { empty, degenerate, infinity_curve };

inline std::string to_string(Regime r) {
  switch (r) {
    case Regime::empty: return "empty";
    case Regime::degenerate: return "degenerate-trajectory";
    case Regime::infinity_curve: return "infinity-curve";
  }
  return "?";
}

struct SectionPoint {
  double alpha = 0.0;  // angle of the level-curve point around the glancing point
  Vec u;               // chart parameters of the starting point
  double t = 0.0;      // time to reach the section
  double y = 0.0;      // section coordinate
  double py = 0.0;
  double phase = 0.0;  // S0 + int p dx
};

struct Cusp {
  double alpha = 0.0;
  double y = 0.0;
  double phase = 0.0;
  double tangent_y = 0.0;      // dy/ds (s = arc length of the (y, p_y) curve)
  double tangent_phase = 0.0;  // d phase/ds
};

struct TransitionOptions {
  Vec u0;                   // glancing point in chart parameters
  double window = 0.75;     // radius of the neighborhood in chart parameters
  int samples = 720;
  int section_index = 0;    // section {x[section_index] = 0}
  double t_window = 3.0;    // trajectories are followed for |t| <= t_window
  double degenerate_tol = 1e-12;
  bool refine_cusps = true;
};

struct TransitionSample {
  double E = 0.0;
  double E0 = 0.0;
  double eps_proxy = 0.0;  // signed E - E0 with eps > 0 iff Sigma_E meets the window
  GlancingKind kind = GlancingKind::non_glancing;
  Regime regime = Regime::empty;
  std::vector<SectionPoint> points;
  std::vector<Cusp> cusps;
  int self_intersections = 0;
  std::string note;

  double diameter() const {
    double d = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i)
      for (std::size_t j = i + 1; j < points.size(); ++j)
        d = std::max(d, std::hypot(points[i].y - points[j].y, points[i].py - points[j].py));
    return d;
  }
};

namespace detail {

inline Vec chart_energy_gradient(const Hamiltonian& h, const ManifoldChart& c, const Vec& u) {
  const PhasePoint z = c.embed(u);
  const Mat T = c.tangent(u);
  const int n = z.dim();
  return T.topRows(n).transpose() * h.grad_x(z.x, z.p) + T.bottomRows(n).transpose() * h.grad_p(z.x, z.p);
}

inline Mat chart_energy_hessian(const Hamiltonian& h, const ManifoldChart& c, const Vec& u) {
  const auto k = u.size();
  Mat H(k, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const double s = 1e-5 * (1 + std::abs(u[j]));
    Vec a = u, b = u;
    a[j] += s;
    b[j] -= s;
    H.col(j) = (chart_energy_gradient(h, c, a) - chart_energy_gradient(h, c, b)) / (2 * s);
  }
  return 0.5 * (H + H.transpose());
}

// segment intersection strictly inside both segments
inline bool segments_cross(double ax, double ay, double bx, double by, double cx, double cy, double dx, double dy) {
  auto orient = [](double px, double py, double qx, double qy, double rx, double ry) {
    return (qx - px) * (ry - py) - (qy - py) * (rx - px);
  };
  const double o1 = orient(ax, ay, bx, by, cx, cy), o2 = orient(ax, ay, bx, by, dx, dy);
  const double o3 = orient(cx, cy, dx, dy, ax, ay), o4 = orient(cx, cy, dx, dy, bx, by);
  return ((o1 > 0) != (o2 > 0)) && ((o3 > 0) != (o4 > 0)) && o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0;
}

}  // namespace detail

/// Number of crossings between non-adjacent edges of the closed polygon (y, p_y).
inline int count_self_intersections(const std::vector<SectionPoint>& pts) {
  const std::size_t M = pts.size();
  int count = 0;
  for (std::size_t i = 0; i < M; ++i) {
    const auto& a = pts[i];
    const auto& b = pts[(i + 1) % M];
    for (std::size_t j = i + 2; j < M; ++j) {
      if (i == 0 && j == M - 1) continue;
      const auto& c = pts[j];
      const auto& d = pts[(j + 1) % M];
      if (detail::segments_cross(a.y, a.py, b.y, b.py, c.y, c.py, d.y, d.py)) ++count;
    }
  }
  return count;
}

/// Sampler of the section of the flow-out of a level curve of H on Lambda0.
class TransitionSampler {
 public:
  TransitionSampler(Hamiltonian h, ManifoldChart lambda0, TransitionOptions opt)
      : h_(std::move(h)), chart_(std::move(lambda0)), opt_(std::move(opt)) {
    if (chart_.dim() != 2 || chart_.space_time()) throw UnsupportedError("transition sampling is implemented for n = 2");
    if (!chart_.has_eikonal()) throw PreconditionError("transition sampling needs an eikonal on the initial chart");
    if (opt_.u0.size() != 2) throw DomainError("transition: u0 must have two chart parameters");
    const PhasePoint z0 = chart_.embed(opt_.u0);
    E0_ = h_(z0);
    const Vec g = detail::chart_energy_gradient(h_, chart_, opt_.u0);
    if (g.norm() > 1e-6 * (1 + std::abs(E0_)))
      throw PreconditionError("transition: u0 is not a critical point of H on the initial manifold (|grad| = " +
                              std::to_string(g.norm()) + ")");
    hess_ = detail::chart_energy_hessian(h_, chart_, opt_.u0);
    kind_ = classify_hessian(hess_, E0_);
    if (kind_ == GlancingKind::degenerate || kind_ == GlancingKind::saddle)
      throw NotApplicableError("transition: the glancing point is " + to_string(kind_) +
                               "; only non-degenerate minima and maxima have the cusp normal form");
  }

  double E0() const { return E0_; }
  GlancingKind kind() const { return kind_; }
  const Mat& hessian() const { return hess_; }

  double eps_proxy(double E) const { return kind_ == GlancingKind::max ? E0_ - E : E - E0_; }

  /// Point of the level curve {H = E} in direction alpha from u0.
  Vec level_point(double E, double alpha) const {
    const Vec dir = Eigen::Vector2d(std::cos(alpha), std::sin(alpha));
    auto f = [&](double s) { return h_(chart_.embed(opt_.u0 + s * dir)) - E; };
    const int grid = 64;
    double a = 0.0, fa = f(0.0);
    for (int k = 1; k <= grid; ++k) {
      const double b = opt_.window * k / grid, fb = f(b);
      if ((fa < 0) != (fb < 0) || fb == 0.0) {
        if (fb == 0.0) return opt_.u0 + b * dir;
        boost::uintmax_t it = 200;
        auto r = boost::math::tools::toms748_solve(f, a, b, fa, fb, boost::math::tools::eps_tolerance<double>(52), it);
        return opt_.u0 + 0.5 * (r.first + r.second) * dir;
      }
      a = b;
      fa = fb;
    }
    throw NoIntersectionError("transition: the level curve H = " + std::to_string(E) +
                              " leaves the window in direction " + std::to_string(alpha));
  }

  /// Section point of the trajectory through the level-curve point at angle alpha.
  SectionPoint section(double E, double alpha) const {
    SectionPoint sp;
    sp.alpha = alpha;
    sp.u = level_point(E, alpha);
    const PhasePoint z = chart_.embed(sp.u);
    const int n = z.dim(), k = opt_.section_index, other = 1 - k;
    Vec y0(2 * n + 1);
    y0 << z.x, z.p, 0.0;
    IntegrationOptions io;
    io.rtol = io.atol = 1e-12;
    const auto rhs = hamilton_rhs(h_, true);
    std::optional<double> best;
    std::optional<DenseTrajectory> best_traj;
    for (double dir : {1.0, -1.0}) {
      const auto traj = integrate_adaptive(rhs, 0.0, y0, dir * opt_.t_window, io);
      auto xk = [&](double t) { return traj.at(t)[k]; };
      double prev_t = 0.0, prev = xk(0.0);
      if (prev == 0.0) {
        best = 0.0;
        best_traj = traj;
        break;
      }
      const int grid = 600;
      for (int g = 1; g <= grid; ++g) {
        const double t = dir * opt_.t_window * g / grid, v = xk(t);
        if ((prev < 0) != (v < 0)) {
          double lo = std::min(prev_t, t), hi = std::max(prev_t, t);
          boost::uintmax_t it = 200;
          auto r = boost::math::tools::toms748_solve(xk, lo, hi, boost::math::tools::eps_tolerance<double>(52), it);
          const double root = 0.5 * (r.first + r.second);
          if (!best || std::abs(root) < std::abs(*best)) {
            best = root;
            best_traj = traj;
          }
          break;
        }
        prev_t = t;
        prev = v;
      }
    }
    if (!best) throw NoIntersectionError("transition: trajectory does not meet the section within the time window");
    const Vec s = best_traj->at(*best);
    sp.t = *best;
    sp.y = s[other];
    sp.py = s[n + other];
    sp.phase = chart_.eikonal(sp.u) + s[2 * n];
    return sp;
  }

  TransitionSample sample(double E) const {
    TransitionSample out;
    out.E = E;
    out.E0 = E0_;
    out.kind = kind_;
    out.eps_proxy = eps_proxy(E);
    if (std::abs(out.eps_proxy) <= opt_.degenerate_tol * (1 + std::abs(E0_))) {
      out.regime = Regime::degenerate;
      out.note = "Sigma_E meets the initial manifold at the glancing point only; loc Lambda_+^E is one trajectory";
      return out;
    }
    if (out.eps_proxy < 0) {
      out.regime = Regime::empty;
      out.note = "Sigma_E does not meet the initial manifold near the glancing point";
      return out;
    }
    out.regime = Regime::infinity_curve;
    const int M = opt_.samples;
    for (int k = 0; k < M; ++k) out.points.push_back(section(E, 2 * std::numbers::pi * k / M));
    out.self_intersections = count_self_intersections(out.points);
    out.cusps = find_cusps(E, out.points);
    return out;
  }

 private:
  std::vector<Cusp> find_cusps(double E, const std::vector<SectionPoint>& pts) const {
    const int M = static_cast<int>(pts.size());
    const double da = 2 * std::numbers::pi / M;
    std::vector<double> dy(M);
    for (int k = 0; k < M; ++k) dy[k] = (pts[(k + 1) % M].y - pts[(k - 1 + M) % M].y) / (2 * da);
    std::vector<Cusp> out;
    for (int k = 0; k < M; ++k) {
      const int k1 = (k + 1) % M;
      if ((dy[k] < 0) == (dy[k1] < 0)) continue;
      const double a0 = 2 * std::numbers::pi * k / M;
      Cusp c;
      c.alpha = a0 + da * dy[k] / (dy[k] - dy[k1]);
      if (opt_.refine_cusps) {
        const double s = 1e-5;
        auto dyda = [&](double a) { return (section(E, a + s).y - section(E, a - s).y) / (2 * s); };
        try {
          boost::uintmax_t it = 60;
          auto r = boost::math::tools::toms748_solve(dyda, a0, a0 + da, boost::math::tools::eps_tolerance<double>(40), it);
          c.alpha = 0.5 * (r.first + r.second);
        } catch (const std::exception&) {
          // keep the interpolated angle
        }
        const SectionPoint p = section(E, c.alpha);
        const SectionPoint pa = section(E, c.alpha + s), pb = section(E, c.alpha - s);
        const double ds = std::hypot(pa.y - pb.y, pa.py - pb.py);
        c.y = p.y;
        c.phase = p.phase;
        c.tangent_y = (pa.y - pb.y) / ds;
        c.tangent_phase = (pa.phase - pb.phase) / ds;
      } else {
        c.y = pts[k].y;
        c.phase = pts[k].phase;
      }
      out.push_back(c);
    }
    return out;
  }

  Hamiltonian h_;
  ManifoldChart chart_;
  TransitionOptions opt_;
  double E0_ = 0.0;
  Mat hess_;
  GlancingKind kind_ = GlancingKind::non_glancing;
};

/// The simplest example: H = |p|^2 / (1 + x^2 + y^2), Lambda0 = {p = (1, 0)},
/// glancing point at the origin with E0 = 1.
inline TransitionSampler simplest_example_sampler(TransitionOptions opt = {}) {
  if (opt.u0.size() == 0) opt.u0 = Vec::Zero(2);
  Polynomial rho = Polynomial::constant(2, 1.0);
  for (int i = 0; i < 2; ++i) rho = rho + Polynomial::variable(2, i).pow(2);
  return TransitionSampler(hamiltonians::conformal2(rho), plane_wave_chart(2), opt);
}

/// Writes the two tables of the transition figure: (y, p_y) and (y, phase).
/// Outside the infinity-curve regime both tables hold only a comment line.
inline void write_figure_tables(const TransitionSample& s, std::ostream& fig1, std::ostream& fig2) {
  fig1.precision(17);
  fig2.precision(17);
  if (s.regime != Regime::infinity_curve) {
    fig1 << "# regime: " << to_string(s.regime) << "\ny,py\n";
    fig2 << "# regime: " << to_string(s.regime) << "\ny,phase\n";
    return;
  }
  fig1 << "y,py\n";
  fig2 << "y,phase\n";
  for (const auto& p : s.points) {
    fig1 << p.y << ',' << p.py << '\n';
    fig2 << p.y << ',' << p.phase << '\n';
  }
  // close the curves
  fig1 << s.points.front().y << ',' << s.points.front().py << '\n';
  fig2 << s.points.front().y << ',' << s.points.front().phase << '\n';
}

}  // namespace glance
