#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "glance/errors.hpp"
#include "glance/flow.hpp"
#include "glance/phase_space.hpp"
#include "glance/symplectic.hpp"

namespace glance {

/// Closed interval for one chart parameter.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double mid() const { return 0.5 * (lo + hi); }
  double width() const { return hi - lo; }
  bool contains(double v) const { return v >= lo && v <= hi; }
};

/// A parametrized Lagrangian chart u -> (X(u), P(u)).
///
/// Space-time charts embed into T*R^{n+1}; their PhasePoints carry t in the
/// last position slot and -E in the last momentum slot.
class ManifoldChart {
 public:
  using EmbedFn = std::function<PhasePoint(const Vec&)>;
  using ScalarFn = std::function<double(const Vec&)>;
  using TangentFn = std::function<Mat(const Vec&)>;

  ManifoldChart() = default;
  ManifoldChart(std::string name, std::vector<std::string> params, std::vector<Interval> box, EmbedFn embed)
      : name_(std::move(name)), params_(std::move(params)), box_(std::move(box)), embed_(std::move(embed)) {
    if (params_.size() != box_.size()) throw DomainError("ManifoldChart: parameter names and box differ in size");
  }

  ManifoldChart& with_eikonal(ScalarFn s) {
    eikonal_ = std::move(s);
    return *this;
  }
  ManifoldChart& with_tangent(TangentFn t) {
    tangent_ = std::move(t);
    return *this;
  }
  ManifoldChart& with_space_time(bool st = true) {
    space_time_ = st;
    return *this;
  }

  const std::string& name() const { return name_; }
  int dim() const { return static_cast<int>(params_.size()); }
  const std::vector<std::string>& param_names() const { return params_; }
  const std::vector<Interval>& box() const { return box_; }
  bool space_time() const { return space_time_; }
  bool has_eikonal() const { return static_cast<bool>(eikonal_); }

  int param_index(const std::string& name) const {
    for (int i = 0; i < dim(); ++i)
      if (params_[i] == name) return i;
    return -1;
  }

  PhasePoint embed(const Vec& u) const {
    if (u.size() != dim()) throw DomainError("chart " + name_ + ": wrong parameter count");
    return embed_(u);
  }

  double eikonal(const Vec& u) const {
    if (!eikonal_) throw UnsupportedError("chart " + name_ + " has no eikonal");
    return eikonal_(u);
  }

  /// Tangent vectors d embed / d u_j as columns of a (2N x dim) matrix of
  /// stacked (dX, dP). Central differences when no analytic frame is set.
  Mat tangent(const Vec& u) const {
    if (tangent_) return tangent_(u);
    const int N = embed(u).dim();
    Mat t(2 * N, dim());
    for (int j = 0; j < dim(); ++j) {
      const double s = 1e-5 * (1 + std::abs(u[j]));
      Vec a = u, b = u;
      a[j] += s;
      b[j] -= s;
      t.col(j) = (embed(a).stacked() - embed(b).stacked()) / (2 * s);
    }
    return t;
  }

  /// Central-difference gradient of the eikonal in the chart parameters.
  Vec eikonal_gradient(const Vec& u) const {
    Vec g(dim());
    for (int j = 0; j < dim(); ++j) {
      const double s = 1e-5 * (1 + std::abs(u[j]));
      Vec a = u, b = u;
      a[j] += s;
      b[j] -= s;
      g[j] = (eikonal(a) - eikonal(b)) / (2 * s);
    }
    return g;
  }

  /// Uniform random parameter vector in the box.
  template <class Rng>
  Vec sample(Rng& rng) const {
    Vec u(dim());
    for (int j = 0; j < dim(); ++j) u[j] = std::uniform_real_distribution<double>(box_[j].lo, box_[j].hi)(rng);
    return u;
  }

  /// Tensor grid with counts[j] nodes along parameter j (endpoints included).
  std::vector<Vec> grid(const std::vector<int>& counts) const {
    if (static_cast<int>(counts.size()) != dim()) throw DomainError("grid: one count per parameter expected");
    std::vector<Vec> out;
    std::vector<int> idx(dim(), 0);
    for (;;) {
      Vec u(dim());
      for (int j = 0; j < dim(); ++j) {
        const int c = counts[j];
        u[j] = c == 1 ? box_[j].mid() : box_[j].lo + box_[j].width() * idx[j] / (c - 1);
      }
      out.push_back(u);
      int j = 0;
      while (j < dim() && ++idx[j] == counts[j]) idx[j++] = 0;
      if (j == dim()) break;
    }
    return out;
  }

 private:
  std::string name_;
  std::vector<std::string> params_;
  std::vector<Interval> box_;
  EmbedFn embed_;
  ScalarFn eikonal_;
  TangentFn tangent_;
  bool space_time_ = false;
};

// ---------------------------------------------------------------------------
// Sphere frames

/// omega(psi) on S^{n-1}: n=2 takes one angle, n=3 takes (polar, azimuth).
inline Vec sphere_omega(const Vec& psi) {
  if (psi.size() == 1) return Eigen::Vector2d(std::cos(psi[0]), std::sin(psi[0]));
  if (psi.size() == 2) {
    const double s1 = std::sin(psi[0]), c1 = std::cos(psi[0]);
    return Eigen::Vector3d(s1 * std::cos(psi[1]), s1 * std::sin(psi[1]), c1);
  }
  throw UnsupportedError("sphere frames are implemented for n = 2 and n = 3");
}

/// Orthonormal direct basis (omega, omega_1, ..., omega_{n-1}) as columns.
inline Mat sphere_frame(const Vec& psi) {
  const Vec w = sphere_omega(psi);
  Mat f(w.size(), w.size());
  f.col(0) = w;
  if (psi.size() == 1) {
    f.col(1) = Eigen::Vector2d(-std::sin(psi[0]), std::cos(psi[0]));
  } else {
    const double s1 = std::sin(psi[0]), c1 = std::cos(psi[0]);
    const double s2 = std::sin(psi[1]), c2 = std::cos(psi[1]);
    f.col(1) = Eigen::Vector3d(c1 * c2, c1 * s2, -s1);
    f.col(2) = Eigen::Vector3d(-s2, c2, 0.0);
  }
  return f;
}

/// Columns d omega / d psi_j.
inline Mat sphere_dpsi(const Vec& psi) {
  Mat f = sphere_frame(psi);
  Mat d = f.rightCols(f.cols() - 1);
  if (psi.size() == 2) d.col(1) *= std::sin(psi[0]);
  return d;
}

/// Columns d^2 omega / d psi_i d psi_j, flattened as (i, j) -> column i*(n-1)+j.
inline Mat sphere_d2psi(const Vec& psi) {
  if (psi.size() == 1) return -sphere_omega(psi);
  const double s1 = std::sin(psi[0]), c1 = std::cos(psi[0]);
  const double s2 = std::sin(psi[1]), c2 = std::cos(psi[1]);
  Mat d(3, 4);
  d.col(0) = -sphere_omega(psi);
  d.col(1) = Eigen::Vector3d(-c1 * s2, c1 * c2, 0.0);
  d.col(2) = d.col(1);
  d.col(3) = Eigen::Vector3d(-s1 * c2, -s1 * s2, 0.0);
  return d;
}

// ---------------------------------------------------------------------------
// Built-in charts

/// (phi * omega(psi) + offset, omega(psi)).
inline PhasePoint bessel_point(double phi, const Vec& psi, const Vec& offset = Vec()) {
  Vec w = sphere_omega(psi);
  Vec x = phi * w;
  if (offset.size()) x += offset;
  return PhasePoint(std::move(x), std::move(w));
}

inline PhasePoint bessel_point(double phi, double psi) { return bessel_point(phi, Vec::Constant(1, psi)); }

/// Tangent basis of the cylinder at (phi, psi): columns (omega, 0) and
/// (phi d omega, d omega) for each sphere angle.
inline Mat tangent_frame_bessel(double phi, const Vec& psi) {
  const Vec w = sphere_omega(psi);
  const auto n = w.size();
  const Mat d = sphere_dpsi(psi);
  Mat t = Mat::Zero(2 * n, n);
  t.col(0).head(n) = w;
  for (Eigen::Index j = 0; j + 1 < n; ++j) {
    t.col(j + 1).head(n) = phi * d.col(j);
    t.col(j + 1).tail(n) = d.col(j);
  }
  return t;
}

inline std::vector<std::string> sphere_param_names(int n) {
  if (n == 2) return {"psi"};
  if (n == 3) return {"psi1", "psi2"};
  throw UnsupportedError("Bessel cylinder charts exist for n = 2 and n = 3");
}

/// The Bessel cylinder {x = phi omega(psi) + offset, p = omega(psi)} with
/// eikonal S = phi (p dx = d phi on it).
inline ManifoldChart bessel_chart(int n, double phi_max = 2.0, const Vec& offset = Vec()) {
  if (offset.size() && offset.size() != n) throw DomainError("bessel_chart: offset has wrong length");
  std::vector<std::string> names{"phi"};
  std::vector<Interval> box{{-phi_max, phi_max}};
  for (auto& s : sphere_param_names(n)) names.push_back(s);
  if (n == 2) {
    box.push_back({0.0, 2 * std::numbers::pi});
  } else {
    box.push_back({0.1, std::numbers::pi - 0.1});
    box.push_back({0.0, 2 * std::numbers::pi});
  }
  ManifoldChart c("bessel", names, box,
                  [offset](const Vec& u) { return bessel_point(u[0], Vec(u.tail(u.size() - 1)), offset); });
  c.with_eikonal([](const Vec& u) { return u[0]; });
  c.with_tangent([](const Vec& u) { return tangent_frame_bessel(u[0], u.tail(u.size() - 1)); });
  return c;
}

/// The plane wave {p = e_1} over x in a box, eikonal S = x_1.
inline ManifoldChart plane_wave_chart(int n, double half_width = 2.0) {
  std::vector<std::string> names;
  for (int i = 0; i < n; ++i) names.push_back("x" + std::to_string(i + 1));
  ManifoldChart c("plane_wave", names, std::vector<Interval>(n, {-half_width, half_width}), [n](const Vec& u) {
    Vec p = Vec::Zero(n);
    p[0] = 1.0;
    return PhasePoint(u, p);
  });
  c.with_eikonal([](const Vec& u) { return u[0]; });
  c.with_tangent([n](const Vec&) {
    Mat t = Mat::Zero(2 * n, n);
    t.topRows(n) = Mat::Identity(n, n);
    return t;
  });
  return c;
}

/// The vertical fiber {x = 0} parametrized by p, eikonal S = 0.
inline ManifoldChart vertical_fiber_chart(int n, double half_width = 2.0) {
  std::vector<std::string> names;
  for (int i = 0; i < n; ++i) names.push_back("p" + std::to_string(i + 1));
  ManifoldChart c("vertical_fiber", names, std::vector<Interval>(n, {-half_width, half_width}),
                  [n](const Vec& u) { return PhasePoint(Vec::Zero(n), u); });
  c.with_eikonal([](const Vec&) { return 0.0; });
  c.with_tangent([n](const Vec&) {
    Mat t = Mat::Zero(2 * n, n);
    t.bottomRows(n) = Mat::Identity(n, n);
    return t;
  });
  return c;
}

// ---------------------------------------------------------------------------
// Flow-outs

/// Space-time flow-out {(g^t z, t; -H(z)) : z in Lambda0, t in [0, t_max]}.
/// Its eikonal is S0 + int p dx - E t, a primitive of p dx - E dt.
inline ManifoldChart flow_out(const ManifoldChart& lambda0, const Hamiltonian& h, double t_max, double tol = 1e-10) {
  if (lambda0.space_time()) throw PreconditionError("flow_out expects an initial chart in T*R^n");
  (void)tol;  // the fixed-step map is accurate well below the usual tolerances
  auto fm = std::make_shared<const FlowMap>(h, t_max);
  const int k = lambda0.dim();
  auto names = lambda0.param_names();
  names.push_back("t");
  auto box = lambda0.box();
  box.push_back({0.0, t_max});
  auto run = [lambda0, fm, k](const Vec& u) {
    const PhasePoint z0 = lambda0.embed(u.head(k));
    try {
      return std::make_pair(z0, (*fm)(z0, u[k]));
    } catch (const IntegrationError& e) {
      std::ostringstream os;
      os << "flow_out: integration failed at parameters [" << u.transpose() << "]: " << e.what();
      throw IntegrationError(os.str(), e.last_good_time());
    }
  };
  ManifoldChart c("flow_out(" + lambda0.name() + "," + h.name() + ")", names, box, [run, h](const Vec& u) {
    const auto [z0, st] = run(u);
    const int n = z0.dim();
    Vec x(n + 1), p(n + 1);
    x << st.z.x, u[u.size() - 1];
    p << st.z.p, -h(z0);
    return PhasePoint(x, p);
  });
  c.with_space_time();
  if (lambda0.has_eikonal()) {
    c.with_eikonal([run, h, lambda0, k](const Vec& u) {
      const auto [z0, st] = run(u);
      return lambda0.eikonal(u.head(k)) + st.action - h(z0) * u[k];
    });
  }
  return c;
}

/// Primitive of p dX alone along a space-time flow-out: S0 + int p dx.
inline double flow_out_action(const ManifoldChart& lambda0, const Hamiltonian& h, const Vec& u, double t_max) {
  const int k = lambda0.dim();
  const FlowMap fm(h, t_max);
  const PhasePoint z0 = lambda0.embed(u.head(k));
  return lambda0.eikonal(u.head(k)) + fm(z0, u[k]).action;
}

struct EnergySliceOptions {
  int solve_index = 0;          // chart parameter eliminated by H = E
  std::optional<double> seed;   // preferred root; default is the interval midpoint
  int coarse_grid = 64;
  double glancing_tol = 1e-8;   // |dH/du_i| below this at the root means glancing
};

/// Solves H(lambda0(u)) = E for u[solve_index], the other entries of u fixed.
/// Returns the completed parameter vector.
inline Vec solve_energy_slice(const ManifoldChart& lambda0, const Hamiltonian& h, double E, const Vec& rest,
                              const EnergySliceOptions& opt = {}) {
  const int k = lambda0.dim(), i = opt.solve_index;
  if (i < 0 || i >= k) throw DomainError("solve_energy_slice: bad solve_index");
  if (rest.size() != k - 1) throw DomainError("solve_energy_slice: wrong number of fixed parameters");
  auto full = [&](double s) {
    Vec u(k);
    for (int j = 0, r = 0; j < k; ++j) u[j] = j == i ? s : rest[r++];
    return u;
  };
  auto f = [&](double s) { return h(lambda0.embed(full(s))) - E; };
  auto df = [&](double s) {
    const Vec u = full(s);
    const PhasePoint z = lambda0.embed(u);
    const Vec t = lambda0.tangent(u).col(i);
    const int n = z.dim();
    return h.grad_x(z.x, z.p).dot(t.head(n)) + h.grad_p(z.x, z.p).dot(t.tail(n));
  };
  const Interval iv = lambda0.box()[i];
  const double seed = opt.seed.value_or(iv.mid());

  std::vector<double> roots;
  double best_abs = INFINITY, best_at = iv.mid();
  double prev_s = iv.lo, prev_f = f(iv.lo);
  for (int g = 1; g <= opt.coarse_grid; ++g) {
    const double s = iv.lo + iv.width() * g / opt.coarse_grid;
    const double fs = f(s);
    if (std::abs(prev_f) < best_abs) {
      best_abs = std::abs(prev_f);
      best_at = prev_s;
    }
    if (prev_f == 0.0) {
      roots.push_back(prev_s);
    } else if ((prev_f < 0) != (fs < 0) && fs != 0.0) {
      // safeguarded Newton inside the bracket
      double a = prev_s, b = s, fa = prev_f;
      double x = 0.5 * (a + b);
      for (int it = 0; it < 100; ++it) {
        const double fx = f(x);
        if (fx == 0.0) break;
        if ((fx < 0) == (fa < 0)) {
          a = x;
          fa = fx;
        } else {
          b = x;
        }
        const double d = df(x);
        double xn = d != 0.0 ? x - fx / d : 0.5 * (a + b);
        if (!(xn > a && xn < b)) xn = 0.5 * (a + b);
        if (std::abs(xn - x) <= 1e-15 * (1 + std::abs(x))) {
          x = xn;
          break;
        }
        x = xn;
      }
      roots.push_back(x);
    }
    prev_s = s;
    prev_f = fs;
  }
  if (prev_f == 0.0) roots.push_back(prev_s);
  if (roots.empty()) {
    if (std::abs(df(best_at)) < 1e-4 * (1 + std::abs(E)) && best_abs < 1e-3 * (1 + std::abs(E)))
      throw GlancingDetectedError("energy E = " + std::to_string(E) +
                                  " touches a critical value of H on the initial manifold; use the normal_form module");
    throw NoIntersectionError("H = " + std::to_string(E) + " does not meet the initial manifold in the parameter box");
  }
  double root = roots.front();
  for (double r : roots) {
    const double dr = std::abs(r - seed), db = std::abs(root - seed);
    if (dr < db - 1e-12 || (std::abs(dr - db) <= 1e-12 && r > root)) root = r;
  }
  if (std::abs(df(root)) < opt.glancing_tol)
    throw GlancingDetectedError("E = " + std::to_string(E) +
                                " is critical for H on the initial manifold here; use the normal_form module");
  return full(root);
}

/// Lambda_+^E = union over t >= 0 of g^t(Lambda0 cap {H = E}), parametrized by
/// the remaining initial parameters and t. Eikonal S0 + int p dx.
inline ManifoldChart flow_out_energy(const ManifoldChart& lambda0, const Hamiltonian& h, double E, double t_max,
                                     double tol = 1e-10, const EnergySliceOptions& opt = {}) {
  (void)tol;
  if (lambda0.space_time()) throw PreconditionError("flow_out_energy expects an initial chart in T*R^n");
  auto fm = std::make_shared<const FlowMap>(h, t_max);
  const int k = lambda0.dim();
  std::vector<std::string> names;
  std::vector<Interval> box;
  for (int j = 0; j < k; ++j)
    if (j != opt.solve_index) {
      names.push_back(lambda0.param_names()[j]);
      box.push_back(lambda0.box()[j]);
    }
  names.push_back("t");
  box.push_back({0.0, t_max});
  // check that the slice exists at the box center before handing out the chart
  {
    Vec c(k - 1);
    for (int j = 0; j < k - 1; ++j) c[j] = box[j].mid();
    solve_energy_slice(lambda0, h, E, c, opt);
  }
  auto run = [=](const Vec& v) {
    const Vec u = solve_energy_slice(lambda0, h, E, v.head(k - 1), opt);
    const PhasePoint z0 = lambda0.embed(u);
    try {
      return std::make_pair(u, (*fm)(z0, v[k - 1]));
    } catch (const IntegrationError& e) {
      std::ostringstream os;
      os << "flow_out_energy: integration failed at parameters [" << v.transpose() << "]: " << e.what();
      throw IntegrationError(os.str(), e.last_good_time());
    }
  };
  ManifoldChart c("flow_out_energy(" + lambda0.name() + "," + h.name() + ")", names, box,
                  [run](const Vec& v) { return run(v).second.z; });
  if (lambda0.has_eikonal()) {
    c.with_eikonal([run, lambda0](const Vec& v) {
      const auto [u, st] = run(v);
      return lambda0.eikonal(u) + st.action;
    });
  }
  return c;
}

/// Flow-out of the slice {u[fixed_index] = value} of lambda0, parametrized by
/// the remaining parameters and t, whether or not that slice lies in one
/// energy level. Used to probe the (t, psi) parametrization.
inline ManifoldChart forced_parameter_chart(const ManifoldChart& lambda0, const Hamiltonian& h, int fixed_index,
                                            double value, double t_max) {
  auto fm = std::make_shared<const FlowMap>(h, t_max);
  const int k = lambda0.dim();
  std::vector<std::string> names;
  std::vector<Interval> box;
  for (int j = 0; j < k; ++j)
    if (j != fixed_index) {
      names.push_back(lambda0.param_names()[j]);
      box.push_back(lambda0.box()[j]);
    }
  names.push_back("t");
  box.push_back({0.0, t_max});
  return ManifoldChart("forced(" + lambda0.name() + ")", names, box, [=](const Vec& v) {
    Vec u(k);
    for (int j = 0, r = 0; j < k; ++j) u[j] = j == fixed_index ? value : v[r++];
    return (*fm)(lambda0.embed(u), v[k - 1]).z;
  });
}

// ---------------------------------------------------------------------------
// Checks

/// Largest |omega(d_i embed, d_j embed)| over `samples` random parameter
/// points. For space-time charts this is dp^dx - dE^dt.
inline double lagrangian_residual(const ManifoldChart& chart, int samples = 100, unsigned seed = 12345) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    const Vec u = chart.sample(rng);
    const Mat t = chart.tangent(u);
    for (int i = 0; i < t.cols(); ++i)
      for (int j = i + 1; j < t.cols(); ++j)
        worst = std::max(worst, std::abs(symplectic_product(t.col(i), t.col(j))));
  }
  return worst;
}

/// Largest |dS/du_j - <P, dX/du_j>| (plus the -E dt term on space-time charts).
inline double eikonal_residual(const ManifoldChart& chart, int samples = 50, unsigned seed = 777) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    const Vec u = chart.sample(rng);
    const PhasePoint z = chart.embed(u);
    const Mat t = chart.tangent(u);
    const Vec g = chart.eikonal_gradient(u);
    const int N = z.dim();
    for (int j = 0; j < chart.dim(); ++j) worst = std::max(worst, std::abs(g[j] - z.p.dot(t.col(j).head(N))));
  }
  return worst;
}

/// max |<dX/dt, dP/dpsi> - <dP/dt, dX/dpsi>| over samples of a (psi, t) chart.
inline double symmetry_relation_residual(const ManifoldChart& chart, int samples = 50, unsigned seed = 99) {
  const int ip = chart.param_index("psi"), it = chart.param_index("t");
  if (chart.dim() != 2 || ip < 0 || it < 0)
    throw PreconditionError("symmetry relation needs a chart parametrized by (psi, t)");
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    const Vec u = chart.sample(rng);
    const Mat t = chart.tangent(u);
    const auto n = t.rows() / 2;
    const Vec Xd = t.col(it).head(n), Pd = t.col(it).tail(n);
    const Vec Xp = t.col(ip).head(n), Pp = t.col(ip).tail(n);
    worst = std::max(worst, std::abs(Xd.dot(Pp) - Pd.dot(Xp)));
  }
  return worst;
}

/// CSV dump: params, X1..Xn, P1..Pn, then t and E for space-time charts, then S.
inline void write_chart_csv(const ManifoldChart& chart, const std::vector<Vec>& nodes, std::ostream& os) {
  if (nodes.empty()) return;
  const PhasePoint z0 = chart.embed(nodes.front());
  const int n = chart.space_time() ? z0.dim() - 1 : z0.dim();
  for (const auto& s : chart.param_names()) os << s << ',';
  for (int i = 0; i < n; ++i) os << 'X' << i + 1 << ',';
  for (int i = 0; i < n; ++i) os << 'P' << i + 1 << (i + 1 < n || chart.space_time() || chart.has_eikonal() ? "," : "");
  if (chart.space_time()) os << "t,E" << (chart.has_eikonal() ? "," : "");
  if (chart.has_eikonal()) os << 'S';
  os << '\n';
  os.precision(12);
  for (const auto& u : nodes) {
    const PhasePoint z = chart.embed(u);
    for (int j = 0; j < u.size(); ++j) os << u[j] << ',';
    for (int i = 0; i < n; ++i) os << z.x[i] << ',';
    for (int i = 0; i < n; ++i) os << z.p[i] << (i + 1 < n || chart.space_time() || chart.has_eikonal() ? "," : "");
    if (chart.space_time()) os << z.x[n] << ',' << -z.p[n] << (chart.has_eikonal() ? "," : "");
    if (chart.has_eikonal()) os << chart.eikonal(u);
    os << '\n';
  }
}

}  // namespace glance
