#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "glance/errors.hpp"
#include "glance/phase_space.hpp"
#include "glance/polynomial.hpp"

namespace glance {

/// Second derivatives of a function on T*R^n, split by blocks.
/// xp(i, j) = d^2 H / dx_i dp_j.
struct HessianBlocks {
  Mat xx;
  Mat xp;
  Mat pp;
};

/// A Hamiltonian H(x, p) with optional closed-form derivatives.
///
/// Missing derivative closures fall back to central differences. When a
/// homogeneity degree m is declared the Euler identity <p, dH/dp> = m H is
/// expected to hold and is checked by the test suite.
class Hamiltonian {
 public:
  using ValueFn = std::function<double(const Vec&, const Vec&)>;
  using GradFn = std::function<Vec(const Vec&, const Vec&)>;
  using HessFn = std::function<HessianBlocks(const Vec&, const Vec&)>;

  Hamiltonian() = default;
  Hamiltonian(std::string name, ValueFn value) : name_(std::move(name)), value_(std::move(value)) {}

  Hamiltonian& with_gradients(GradFn dx, GradFn dp) {
    grad_x_ = std::move(dx);
    grad_p_ = std::move(dp);
    return *this;
  }
  Hamiltonian& with_hessian(HessFn h) {
    hess_ = std::move(h);
    return *this;
  }
  Hamiltonian& with_degree(double m) {
    degree_ = m;
    return *this;
  }
  /// |p|-type Hamiltonians are not smooth at p = 0.
  Hamiltonian& singular_at_zero_momentum(bool s = true) {
    singular_p0_ = s;
    return *this;
  }

  const std::string& name() const { return name_; }
  std::optional<double> degree() const { return degree_; }
  bool has_analytic_gradient() const { return static_cast<bool>(grad_x_) && static_cast<bool>(grad_p_); }

  double operator()(const PhasePoint& z) const { return value(z.x, z.p); }

  double value(const Vec& x, const Vec& p) const {
    check_domain(x, p);
    const double v = value_(x, p);
    if (!std::isfinite(v)) throw EvaluationError("H(" + name_ + ") non-finite at " + PhasePoint(x, p).str());
    return v;
  }

  Vec grad_x(const Vec& x, const Vec& p) const {
    check_domain(x, p);
    Vec g;
    if (grad_x_) {
      g = grad_x_(x, p);
    } else {
      g.resize(x.size());
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double h = fd_step(x[i]);
        Vec a = x, b = x;
        a[i] += h;
        b[i] -= h;
        g[i] = (value_(a, p) - value_(b, p)) / (2 * h);
      }
    }
    if (!g.allFinite()) throw EvaluationError("dH/dx non-finite at " + PhasePoint(x, p).str());
    return g;
  }

  Vec grad_p(const Vec& x, const Vec& p) const {
    check_domain(x, p);
    Vec g;
    if (grad_p_) {
      g = grad_p_(x, p);
    } else {
      g.resize(p.size());
      for (Eigen::Index i = 0; i < p.size(); ++i) {
        const double h = fd_step(p[i]);
        Vec a = p, b = p;
        a[i] += h;
        b[i] -= h;
        g[i] = (value_(x, a) - value_(x, b)) / (2 * h);
      }
    }
    if (!g.allFinite()) throw EvaluationError("dH/dp non-finite at " + PhasePoint(x, p).str());
    return g;
  }

  HessianBlocks hessian(const Vec& x, const Vec& p) const {
    check_domain(x, p);
    if (hess_) return hess_(x, p);
    const auto n = x.size();
    HessianBlocks h{Mat(n, n), Mat(n, n), Mat(n, n)};
    for (Eigen::Index j = 0; j < n; ++j) {
      const double sx = 1e-5 * (1 + std::abs(x[j]));
      Vec a = x, b = x;
      a[j] += sx;
      b[j] -= sx;
      h.xx.col(j) = (grad_x(a, p) - grad_x(b, p)) / (2 * sx);
      h.xp.row(j) = ((grad_p(a, p) - grad_p(b, p)) / (2 * sx)).transpose();
      const double sp = 1e-5 * (1 + std::abs(p[j]));
      Vec c = p, d = p;
      c[j] += sp;
      d[j] -= sp;
      h.pp.col(j) = (grad_p(x, c) - grad_p(x, d)) / (2 * sp);
    }
    return h;
  }

 private:
  void check_domain(const Vec& x, const Vec& p) const {
    if (x.size() != p.size()) throw DomainError("H(" + name_ + "): x and p differ in length");
    if (singular_p0_ && p.norm() < 1e-10)
      throw DomainError("H(" + name_ + ") is singular at |p| < 1e-10, got " + PhasePoint(x, p).str());
  }

  std::string name_;
  ValueFn value_;
  GradFn grad_x_;
  GradFn grad_p_;
  HessFn hess_;
  std::optional<double> degree_;
  bool singular_p0_ = false;
};

/// Gradient of a phase-space function, split into its x and p parts.
struct PhaseGradient {
  Vec dx;
  Vec dp;
};

/// A smooth function on T*R^n with an optional closed-form gradient.
class ScalarField {
 public:
  using ValueFn = std::function<double(const PhasePoint&)>;
  using GradFn = std::function<PhaseGradient(const PhasePoint&)>;

  ScalarField() = default;
  explicit ScalarField(ValueFn v, GradFn g = {}, double fd_scale = 1e-6)
      : value_(std::move(v)), grad_(std::move(g)), fd_scale_(fd_scale) {}

  /// Polynomial in the stacked variables (x_1..x_n, p_1..p_n).
  static ScalarField from_polynomial(const Polynomial& q) {
    const int n = q.nvars() / 2;
    auto poly = std::make_shared<const Polynomial>(q);
    std::vector<Polynomial> d;
    for (int i = 0; i < q.nvars(); ++i) d.push_back(q.derivative(i));
    auto derivs = std::make_shared<const std::vector<Polynomial>>(std::move(d));
    return ScalarField([poly](const PhasePoint& z) { return (*poly)(z.stacked()); },
                       [derivs, n](const PhasePoint& z) {
                         const Vec s = z.stacked();
                         PhaseGradient g{Vec(n), Vec(n)};
                         for (int i = 0; i < n; ++i) {
                           g.dx[i] = (*derivs)[i](s);
                           g.dp[i] = (*derivs)[n + i](s);
                         }
                         return g;
                       });
  }

  static ScalarField from_hamiltonian(const Hamiltonian& h) {
    return ScalarField([h](const PhasePoint& z) { return h(z); },
                       [h](const PhasePoint& z) { return PhaseGradient{h.grad_x(z.x, z.p), h.grad_p(z.x, z.p)}; });
  }

  ScalarField scaled(double c) const {
    ScalarField f = *this;
    auto base = *this;
    f.value_ = [base, c](const PhasePoint& z) { return c * base(z); };
    if (grad_) {
      f.grad_ = [base, c](const PhasePoint& z) {
        auto g = base.gradient(z);
        return PhaseGradient{c * g.dx, c * g.dp};
      };
    }
    return f;
  }

  bool has_analytic_gradient() const { return static_cast<bool>(grad_); }

  double operator()(const PhasePoint& z) const {
    const double v = value_(z);
    if (!std::isfinite(v)) throw EvaluationError("scalar field non-finite at " + z.str());
    return v;
  }

  /// Analytic gradient when present, central differences otherwise. The
  /// step is fd_scale * (1 + |z_i|).
  PhaseGradient gradient(const PhasePoint& z) const {
    if (grad_) return grad_(z);
    const int n = z.dim();
    PhaseGradient g{Vec(n), Vec(n)};
    for (int i = 0; i < n; ++i) {
      PhasePoint a = z, b = z;
      const double hx = fd_scale_ * (1 + std::abs(z.x[i]));
      a.x[i] += hx;
      b.x[i] -= hx;
      g.dx[i] = ((*this)(a) - (*this)(b)) / (2 * hx);
      PhasePoint c = z, d = z;
      const double hp = fd_scale_ * (1 + std::abs(z.p[i]));
      c.p[i] += hp;
      d.p[i] -= hp;
      g.dp[i] = ((*this)(c) - (*this)(d)) / (2 * hp);
    }
    return g;
  }

 private:
  ValueFn value_;
  GradFn grad_;
  double fd_scale_ = 1e-6;
};

/// Sign convention for the Poisson bracket. `standard` is
/// {f,g} = <d_p f, d_x g> - <d_x f, d_p g>.
enum class BracketSign { standard, opposite };

/// v_H(z) = (dH/dp, -dH/dx), returned as a PhasePoint-shaped tangent vector.
inline PhasePoint hamilton_vector_field(const Hamiltonian& h, const PhasePoint& z) {
  return PhasePoint(h.grad_p(z.x, z.p), -h.grad_x(z.x, z.p));
}

inline double poisson_bracket(const ScalarField& f, const ScalarField& g, const PhasePoint& z,
                              BracketSign sign = BracketSign::standard) {
  const auto gf = f.gradient(z);
  const auto gg = g.gradient(z);
  const double b = gf.dp.dot(gg.dx) - gf.dx.dot(gg.dp);
  return sign == BracketSign::standard ? b : -b;
}

/// {f, g} as a field of its own. It has no closed-form gradient, so an outer
/// bracket differentiates it with the wider nested step.
inline ScalarField bracket_field(const ScalarField& f, const ScalarField& g, BracketSign sign = BracketSign::standard) {
  return ScalarField([f, g, sign](const PhasePoint& z) { return poisson_bracket(f, g, z, sign); }, {}, 1e-4);
}

/// Right-nested bracket of a word: [a, b] -> {a, b}; [a, b, c] -> {a, {b, c}}.
inline double iterated_bracket(const std::vector<const ScalarField*>& word, const PhasePoint& z,
                               BracketSign sign = BracketSign::standard) {
  if (word.size() < 2) throw UnsupportedError("iterated bracket needs at least two fields");
  if (word.size() > 3) throw UnsupportedError("iterated bracket depth > 3 is not supported");
  if (word.size() == 2) return poisson_bracket(*word[0], *word[1], z, sign);
  const ScalarField inner = bracket_field(*word[1], *word[2], sign);
  return poisson_bracket(*word[0], inner, z, sign);
}

/// Nested bracket of two fields following a pattern over {'f','g'}, e.g.
/// "ffg" = {f,{f,g}} and "ggf" = {g,{g,f}}.
inline double nested_bracket(const ScalarField& f, const ScalarField& g, const PhasePoint& z, std::string_view pattern,
                             BracketSign sign = BracketSign::standard) {
  if (pattern.size() > 3) throw UnsupportedError("nested bracket pattern longer than 3");
  std::vector<const ScalarField*> word;
  for (char c : pattern) {
    if (c == 'f')
      word.push_back(&f);
    else if (c == 'g')
      word.push_back(&g);
    else
      throw UnsupportedError(std::string("nested bracket pattern letter '") + c + "'");
  }
  return iterated_bracket(word, z, sign);
}

}  // namespace glance
