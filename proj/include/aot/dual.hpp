#pragma once

// Forward-mode automatic differentiation with a dense partials vector.
//
// Dual<N> carries a value and the partial derivatives with respect to N
// active parameters. All template formulas are written once over a generic
// scalar and evaluated either on double (values only) or on Dual<N>
// (values and gradients).

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <type_traits>

#include "aot/errors.hpp"
#include "aot/geometry.hpp"

namespace aot {

template <std::size_t N>
class Dual {
public:
  using Partials = std::array<double, N>;

  constexpr Dual() : value_(0.0), partials_{} {}
  constexpr Dual(double v) : value_(v), partials_{} {}  // NOLINT: implicit on purpose
  constexpr Dual(double v, const Partials& d) : value_(v), partials_(d) {}

  // The i-th independent variable with value v.
  static Dual variable(double v, std::size_t i) {
    Dual r(v);
    r.partials_[i] = 1.0;
    return r;
  }

  double value() const { return value_; }
  const Partials& partials() const { return partials_; }
  double partial(std::size_t i) const { return partials_[i]; }
  static constexpr std::size_t size() { return N; }

  Dual operator-() const {
    Dual r(-value_);
    for (std::size_t i = 0; i < N; ++i) r.partials_[i] = -partials_[i];
    return r;
  }

  Dual& operator+=(const Dual& o) {
    value_ += o.value_;
    for (std::size_t i = 0; i < N; ++i) partials_[i] += o.partials_[i];
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    value_ -= o.value_;
    for (std::size_t i = 0; i < N; ++i) partials_[i] -= o.partials_[i];
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    for (std::size_t i = 0; i < N; ++i) partials_[i] = partials_[i] * o.value_ + value_ * o.partials_[i];
    value_ *= o.value_;
    return *this;
  }
  Dual& operator/=(const Dual& o) {
    const double inv = 1.0 / o.value_;
    const double q = value_ * inv;
    for (std::size_t i = 0; i < N; ++i) partials_[i] = (partials_[i] - q * o.partials_[i]) * inv;
    value_ = q;
    return *this;
  }
  Dual& operator+=(double s) { value_ += s; return *this; }
  Dual& operator-=(double s) { value_ -= s; return *this; }
  Dual& operator*=(double s) {
    value_ *= s;
    for (auto& d : partials_) d *= s;
    return *this;
  }
  Dual& operator/=(double s) { return *this *= (1.0 / s); }

  // Chain rule for a unary function with value f and derivative df at value().
  Dual chain(double f, double df) const {
    Dual r(f);
    for (std::size_t i = 0; i < N; ++i) r.partials_[i] = df * partials_[i];
    return r;
  }

  friend Dual operator+(Dual a, const Dual& b) { return a += b; }
  friend Dual operator-(Dual a, const Dual& b) { return a -= b; }
  friend Dual operator*(Dual a, const Dual& b) { return a *= b; }
  friend Dual operator/(Dual a, const Dual& b) { return a /= b; }
  friend Dual operator+(Dual a, double s) { return a += s; }
  friend Dual operator+(double s, Dual a) { return a += s; }
  friend Dual operator-(Dual a, double s) { return a -= s; }
  friend Dual operator-(double s, const Dual& a) { return (-a) += s; }
  friend Dual operator*(Dual a, double s) { return a *= s; }
  friend Dual operator*(double s, Dual a) { return a *= s; }
  friend Dual operator/(Dual a, double s) { return a /= s; }
  friend Dual operator/(double s, const Dual& a) { return Dual(s) /= a; }

  // Comparisons look at values only; branch selection (max, abs) then picks
  // the derivative of the active branch.
  friend bool operator<(const Dual& a, const Dual& b) { return a.value_ < b.value_; }
  friend bool operator>(const Dual& a, const Dual& b) { return a.value_ > b.value_; }
  friend bool operator<=(const Dual& a, const Dual& b) { return a.value_ <= b.value_; }
  friend bool operator>=(const Dual& a, const Dual& b) { return a.value_ >= b.value_; }

private:
  double value_;
  Partials partials_;
};

template <std::size_t N>
double value_of(const Dual<N>& x) { return x.value(); }

template <std::size_t N>
Dual<N> sqrt(const Dual<N>& x) {
  const double s = std::sqrt(x.value());
  return x.chain(s, 0.5 / s);
}
template <std::size_t N>
Dual<N> sin(const Dual<N>& x) { return x.chain(std::sin(x.value()), std::cos(x.value())); }
template <std::size_t N>
Dual<N> cos(const Dual<N>& x) { return x.chain(std::cos(x.value()), -std::sin(x.value())); }
template <std::size_t N>
Dual<N> exp(const Dual<N>& x) {
  const double e = std::exp(x.value());
  return x.chain(e, e);
}
template <std::size_t N>
Dual<N> log(const Dual<N>& x) { return x.chain(std::log(x.value()), 1.0 / x.value()); }
template <std::size_t N>
Dual<N> abs(const Dual<N>& x) { return x.value() < 0.0 ? -x : x; }
template <std::size_t N>
Dual<N> atan2(const Dual<N>& y, const Dual<N>& x) {
  const double r2 = x.value() * x.value() + y.value() * y.value();
  Dual<N> r(std::atan2(y.value(), x.value()));
  typename Dual<N>::Partials d{};
  for (std::size_t i = 0; i < N; ++i)
    d[i] = (x.value() * y.partial(i) - y.value() * x.partial(i)) / r2;
  return Dual<N>(r.value(), d);
}
template <std::size_t N>
Dual<N> max(const Dual<N>& a, const Dual<N>& b) { return a.value() < b.value() ? b : a; }
template <std::size_t N>
Dual<N> min(const Dual<N>& a, const Dual<N>& b) { return b.value() < a.value() ? b : a; }

using std::max;
using std::min;

// Value and gradient of a K-parameter function. `f` is a generic callable
// taking std::span<const Scalar>.
template <std::size_t K, class F>
std::pair<double, std::array<double, K>> value_and_gradient(F&& f, const std::array<double, K>& x) {
  std::array<Dual<K>, K> vars;
  for (std::size_t i = 0; i < K; ++i) vars[i] = Dual<K>::variable(x[i], i);
  const Dual<K> y = f(std::span<const Dual<K>>(vars));
  return {y.value(), y.partials()};
}

// Largest relative discrepancy between the dual-number partials of `f` and
// central differences with step h:
//   max_i |dual_i - fd_i| / (|fd_i| + 1e-12)
// When `f` accepts long double the differences are taken in extended
// precision, so partials that vanish identically are not swamped by
// double-precision roundoff.
template <std::size_t K, class F>
double grad_check(F&& f, const std::array<double, K>& x, double h) {
  if (!(h > 0.0)) throw DomainError("grad_check step must be positive");
  const double f0 = f(std::span<const double>(x));
  if (!std::isfinite(f0)) throw EvaluationError("function value is not finite at the check point");
  const auto [v, grad] = value_and_gradient<K>(f, x);
  (void)v;
  double worst = 0.0;
  for (std::size_t i = 0; i < K; ++i) {
    double fd = 0.0;
    if constexpr (std::is_invocable_v<F&, std::span<const long double>>) {
      std::array<long double, K> xp, xm;
      for (std::size_t k = 0; k < K; ++k) xp[k] = xm[k] = x[k];
      xp[i] += h;
      xm[i] -= h;
      const long double fp = f(std::span<const long double>(xp));
      const long double fm = f(std::span<const long double>(xm));
      if (!std::isfinite(static_cast<double>(fp)) || !std::isfinite(static_cast<double>(fm)))
        throw EvaluationError("function value is not finite near the check point");
      fd = static_cast<double>((fp - fm) / (2.0L * static_cast<long double>(h)));
    } else {
      std::array<double, K> xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      const double fp = f(std::span<const double>(xp));
      const double fm = f(std::span<const double>(xm));
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw EvaluationError("function value is not finite near the check point");
      fd = (fp - fm) / (2.0 * h);
    }
    worst = std::max(worst, std::abs(grad[i] - fd) / (std::abs(fd) + 1e-12));
  }
  return worst;
}

}  // namespace aot
