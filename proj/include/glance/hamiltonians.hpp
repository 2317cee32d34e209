#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "glance/errors.hpp"
#include "glance/polynomial.hpp"
#include "glance/symplectic.hpp"

namespace glance::hamiltonians {

/// H = p_n (last momentum component).
inline Hamiltonian pn(int n) {
  return Hamiltonian("pn", [n](const Vec&, const Vec& p) { return p[n - 1]; })
      .with_gradients([](const Vec& x, const Vec&) { return Vec(Vec::Zero(x.size())); },
                      [n](const Vec&, const Vec& p) {
                        Vec g = Vec::Zero(p.size());
                        g[n - 1] = 1.0;
                        return g;
                      })
      .with_hessian([](const Vec& x, const Vec&) {
        const auto k = x.size();
        return HessianBlocks{Mat::Zero(k, k), Mat::Zero(k, k), Mat::Zero(k, k)};
      })
      .with_degree(1.0);
}

/// H = p_y on T*R^2.
inline Hamiltonian py() {
  return Hamiltonian("py", [](const Vec&, const Vec& p) { return p[1]; })
      .with_gradients([](const Vec& x, const Vec&) { return Vec(Vec::Zero(x.size())); },
                      [](const Vec&, const Vec&) { return Vec(Eigen::Vector2d(0.0, 1.0)); })
      .with_hessian([](const Vec&, const Vec&) {
        return HessianBlocks{Mat::Zero(2, 2), Mat::Zero(2, 2), Mat::Zero(2, 2)};
      })
      .with_degree(1.0);
}

/// Free Hamiltonian H = |p|^2.
inline Hamiltonian free() {
  return Hamiltonian("free", [](const Vec&, const Vec& p) { return p.squaredNorm(); })
      .with_gradients([](const Vec& x, const Vec&) { return Vec(Vec::Zero(x.size())); },
                      [](const Vec&, const Vec& p) { return Vec(2.0 * p); })
      .with_hessian([](const Vec& x, const Vec&) {
        const auto k = x.size();
        return HessianBlocks{Mat::Zero(k, k), Mat::Zero(k, k), 2.0 * Mat::Identity(k, k)};
      })
      .with_degree(2.0);
}

/// Conformal metric H = |p|^m / rho(x), m in {1, 2}, rho a polynomial that
/// must stay positive on the region of interest.
inline Hamiltonian conformal(int m, const Polynomial& rho) {
  if (m != 1 && m != 2) throw UnsupportedError("conformal Hamiltonian supports m = 1 or m = 2");
  struct RhoJets {
    Polynomial value;
    std::vector<Polynomial> d1;
    std::vector<std::vector<Polynomial>> d2;
  };
  auto r = std::make_shared<RhoJets>();
  r->value = rho;
  const int n = rho.nvars();
  for (int i = 0; i < n; ++i) {
    r->d1.push_back(rho.derivative(i));
    r->d2.emplace_back();
    for (int j = 0; j < n; ++j) r->d2.back().push_back(r->d1.back().derivative(j));
  }
  auto rho_value = [r](const Vec& x) {
    const double v = r->value(x);
    if (!(v > 0.0)) throw DomainError("rho must be positive, got " + std::to_string(v));
    return v;
  };
  auto rho_grad = [r, n](const Vec& x) {
    Vec g(n);
    for (int i = 0; i < n; ++i) g[i] = r->d1[i](x);
    return g;
  };
  auto rho_hess = [r, n](const Vec& x) {
    Mat h(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) h(i, j) = r->d2[i][j](x);
    return h;
  };
  // g(p) = |p|^m and its derivatives
  auto g = [m](const Vec& p) { return m == 1 ? p.norm() : p.squaredNorm(); };
  auto dg = [m](const Vec& p) -> Vec { return m == 1 ? Vec(p / p.norm()) : Vec(2.0 * p); };
  auto d2g = [m](const Vec& p) -> Mat {
    const auto k = p.size();
    if (m == 2) return 2.0 * Mat::Identity(k, k);
    const double a = p.norm();
    return (Mat::Identity(k, k) - p * p.transpose() / (a * a)) / a;
  };
  Hamiltonian h(m == 1 ? "conformal1" : "conformal2",
                [=](const Vec& x, const Vec& p) { return g(p) / rho_value(x); });
  h.with_gradients(
       [=](const Vec& x, const Vec& p) {
         const double rv = rho_value(x);
         return Vec(-g(p) * rho_grad(x) / (rv * rv));
       },
       [=](const Vec& x, const Vec& p) { return Vec(dg(p) / rho_value(x)); })
      .with_hessian([=](const Vec& x, const Vec& p) {
        const double rv = rho_value(x);
        const Vec gr = rho_grad(x);
        const Mat hr = rho_hess(x);
        const double gp = g(p);
        HessianBlocks hb;
        hb.xx = -gp * (hr / (rv * rv) - 2.0 * gr * gr.transpose() / (rv * rv * rv));
        hb.xp = -gr * dg(p).transpose() / (rv * rv);
        hb.pp = d2g(p) / rv;
        return hb;
      })
      .with_degree(static_cast<double>(m));
  if (m == 1) h.singular_at_zero_momentum();
  return h;
}

inline Hamiltonian conformal1(const Polynomial& rho) { return conformal(1, rho); }
inline Hamiltonian conformal2(const Polynomial& rho) { return conformal(2, rho); }

/// rho(x) = 1 + |x|^2 in dimension n.
inline Polynomial rho_quadratic(int n) {
  Polynomial r = Polynomial::constant(n, 1.0);
  for (int i = 0; i < n; ++i) r = r + Polynomial::variable(n, i).pow(2);
  return r;
}

/// rho(x) = 1/2 (1 + |x - x0|^2), evaluated in the shifted variables so
/// that rho(x0) = 1/2 and grad rho(x0) = 0 hold exactly.
inline Polynomial rho_shifted_half(const Vec& x0) {
  return (rho_quadratic(static_cast<int>(x0.size())) * 0.5).centered_at(x0);
}

/// Builds a registry Hamiltonian by name. `rho` is used by the conformal
/// entries only; `n` is the configuration-space dimension.
inline Hamiltonian by_name(const std::string& name, int n, const Polynomial& rho) {
  if (name == "pn") return pn(n);
  if (name == "py") {
    if (n != 2) throw ConfigError("hamiltonian 'py' requires n = 2");
    return py();
  }
  if (name == "free") return free();
  if (name == "conformal1") return conformal1(rho);
  if (name == "conformal2") return conformal2(rho);
  throw ConfigError("unknown hamiltonian '" + name + "' (expected pn, free, py, conformal1, conformal2)");
}

inline std::vector<std::string> registry_names() { return {"pn", "free", "py", "conformal1", "conformal2"}; }

}  // namespace glance::hamiltonians
