#pragma once

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "glance/errors.hpp"
#include "glance/phase_space.hpp"

namespace glance {

/// Multivariate polynomial with real coefficients, stored as an
/// exponent-vector -> coefficient table.
class Polynomial {
 public:
  using Exponent = std::vector<int>;

  Polynomial() = default;
  explicit Polynomial(int nvars) : nvars_(nvars) {}

  static Polynomial constant(int nvars, double c) {
    Polynomial q(nvars);
    q.add_term(Exponent(nvars, 0), c);
    return q;
  }

  static Polynomial variable(int nvars, int index) {
    Polynomial q(nvars);
    Exponent e(nvars, 0);
    e.at(index) = 1;
    q.add_term(e, 1.0);
    return q;
  }

  int nvars() const { return nvars_; }
  const std::map<Exponent, double>& terms() const { return terms_; }

  void add_term(const Exponent& e, double c) {
    if (static_cast<int>(e.size()) != nvars_)
      throw DomainError("Polynomial: exponent length does not match variable count");
    for (int k : e)
      if (k < 0) throw DomainError("Polynomial: negative exponent");
    if (c == 0.0) return;
    auto& slot = terms_[e];
    slot += c;
    if (slot == 0.0) terms_.erase(e);
  }

  int degree() const {
    int d = 0;
    for (const auto& [e, c] : terms_) {
      int s = 0;
      for (int k : e) s += k;
      d = std::max(d, s);
    }
    return d;
  }

  double operator()(std::span<const double> v) const {
    check_arity(v.size());
    double sum = 0.0;
    for (const auto& [e, c] : terms_) {
      double m = c;
      for (int i = 0; i < nvars_; ++i)
        if (e[i] != 0) m *= std::pow(shifted(v[i], i), e[i]);
      sum += m;
    }
    return sum;
  }

  /// The same coefficient table read in the variables u = x - center.
  /// Evaluation at the center is then exact.
  Polynomial centered_at(const Vec& center) const {
    if (center.size() != nvars_) throw DomainError("Polynomial: center has wrong length");
    Polynomial q = *this;
    q.center_ = center;
    return q;
  }

  const Vec& center() const { return center_; }

  double operator()(const Vec& v) const { return (*this)(std::span<const double>(v.data(), v.size())); }

  Polynomial derivative(int var) const {
    Polynomial q(nvars_);
    q.center_ = center_;
    for (const auto& [e, c] : terms_) {
      if (e[var] == 0) continue;
      Exponent f = e;
      f[var] -= 1;
      q.add_term(f, c * e[var]);
    }
    return q;
  }

  Vec gradient(const Vec& v) const {
    check_arity(v.size());
    Vec g(nvars_);
    for (int i = 0; i < nvars_; ++i) g[i] = derivative(i)(v);
    return g;
  }

  Mat hessian(const Vec& v) const {
    check_arity(v.size());
    Mat h(nvars_, nvars_);
    for (int i = 0; i < nvars_; ++i) {
      const Polynomial di = derivative(i);
      for (int j = i; j < nvars_; ++j) h(i, j) = h(j, i) = di.derivative(j)(v);
    }
    return h;
  }

  Polynomial operator+(const Polynomial& o) const {
    Polynomial q = *this;
    q.absorb_arity(o);
    q.check_center(o);
    for (const auto& [e, c] : o.terms_) q.add_term(e, c);
    return q;
  }

  Polynomial operator-() const {
    Polynomial q(nvars_);
    q.center_ = center_;
    for (const auto& [e, c] : terms_) q.add_term(e, -c);
    return q;
  }

  Polynomial operator-(const Polynomial& o) const { return *this + (-o); }

  Polynomial operator*(const Polynomial& o) const {
    Polynomial q(std::max(nvars_, o.nvars_));
    if (nvars_ != o.nvars_ && !(terms_.empty() || o.terms_.empty()))
      throw DomainError("Polynomial: arity mismatch in product");
    q.center_ = center_.size() ? center_ : o.center_;
    q.check_center(o);
    for (const auto& [e1, c1] : terms_)
      for (const auto& [e2, c2] : o.terms_) {
        Exponent e(e1.size());
        for (std::size_t i = 0; i < e.size(); ++i) e[i] = e1[i] + e2[i];
        q.add_term(e, c1 * c2);
      }
    return q;
  }

  Polynomial operator*(double s) const {
    Polynomial q(nvars_);
    q.center_ = center_;
    for (const auto& [e, c] : terms_) q.add_term(e, c * s);
    return q;
  }

  Polynomial pow(int k) const {
    if (k < 0) throw DomainError("Polynomial: negative power");
    Polynomial r = constant(nvars_, 1.0);
    r.center_ = center_;
    for (int i = 0; i < k; ++i) r = r * *this;
    return r;
  }

  bool is_constant() const {
    for (const auto& [e, c] : terms_)
      for (int k : e)
        if (k != 0) return false;
    return true;
  }

  double constant_term() const {
    auto it = terms_.find(Exponent(nvars_, 0));
    return it == terms_.end() ? 0.0 : it->second;
  }

  /// Parses expressions such as "1+x^2+y^2" or "0.5*(1+(x-2)^2+y^2)".
  static Polynomial parse(std::string_view text, const std::vector<std::string>& var_names);

 private:
  void check_arity(std::size_t n) const {
    if (static_cast<int>(n) != nvars_) throw DomainError("Polynomial: wrong number of arguments");
  }
  double shifted(double v, int i) const { return center_.size() ? v - center_[i] : v; }

  void check_center(const Polynomial& o) const {
    const bool a = center_.size() && !center_.isZero(0.0);
    const bool b = o.center_.size() && !o.center_.isZero(0.0);
    if ((a || b) && (center_.size() != o.center_.size() || center_ != o.center_))
      throw DomainError("Polynomial: cannot combine polynomials with different centers");
  }

  void absorb_arity(const Polynomial& o) {
    if (nvars_ == o.nvars_) return;
    if (terms_.empty()) {
      nvars_ = o.nvars_;
      return;
    }
    if (!o.terms_.empty()) throw DomainError("Polynomial: arity mismatch in sum");
  }

  int nvars_ = 0;
  std::map<Exponent, double> terms_;
  Vec center_;
};

namespace detail {

class PolynomialParser {
 public:
  PolynomialParser(std::string_view s, const std::vector<std::string>& names) : s_(s), names_(names) {}

  Polynomial run() {
    Polynomial r = expr();
    skip_ws();
    if (pos_ != s_.size()) fail("unexpected trailing input");
    return r;
  }

 private:
  [[noreturn]] void fail(const std::string& why) const {
    throw ConfigError("polynomial parse error at column " + std::to_string(pos_ + 1) + " in '" +
                      std::string(s_) + "': " + why);
  }

  int nvars() const { return static_cast<int>(names_.size()); }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool eat(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  Polynomial expr() {
    Polynomial r = term();
    for (;;) {
      if (eat('+'))
        r = r + term();
      else if (eat('-'))
        r = r - term();
      else
        return r;
    }
  }

  Polynomial term() {
    Polynomial r = unary();
    for (;;) {
      if (eat('*')) {
        r = r * unary();
      } else if (eat('/')) {
        Polynomial d = unary();
        if (!d.is_constant() || d.constant_term() == 0.0) fail("division only by a nonzero constant");
        r = r * (1.0 / d.constant_term());
      } else {
        return r;
      }
    }
  }

  Polynomial unary() {
    if (eat('-')) return -unary();
    if (eat('+')) return unary();
    return power();
  }

  Polynomial power() {
    Polynomial base = primary();
    if (eat('^')) {
      skip_ws();
      std::size_t start = pos_;
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      if (start == pos_) fail("expected a non-negative integer exponent");
      base = base.pow(std::stoi(std::string(s_.substr(start, pos_ - start))));
    }
    return base;
  }

  Polynomial primary() {
    skip_ws();
    if (pos_ >= s_.size()) fail("unexpected end of input");
    if (eat('(')) {
      Polynomial r = expr();
      if (!eat(')')) fail("expected ')'");
      return r;
    }
    const char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const std::string rest(s_.substr(pos_));
      char* end = nullptr;
      const double v = std::strtod(rest.c_str(), &end);
      if (end == rest.c_str()) fail("bad number");
      pos_ += static_cast<std::size_t>(end - rest.c_str());
      return Polynomial::constant(nvars(), v);
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      std::size_t start = pos_;
      while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
      const std::string name(s_.substr(start, pos_ - start));
      for (int i = 0; i < nvars(); ++i)
        if (names_[i] == name) return Polynomial::variable(nvars(), i);
      pos_ = start;
      fail("unknown variable '" + name + "'");
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  std::string_view s_;
  const std::vector<std::string>& names_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline Polynomial Polynomial::parse(std::string_view text, const std::vector<std::string>& var_names) {
  return detail::PolynomialParser(text, var_names).run();
}

/// Variable names accepted for spatial polynomials (rho) in dimension n.
inline std::vector<std::string> spatial_variable_names(int n) {
  if (n == 1) return {"x"};
  if (n == 2) return {"x", "y"};
  return {"x", "y", "z"};
}

}  // namespace glance
