#pragma once

// Forward-mode dual numbers with a fixed number of partials.

#include <array>
#include <cmath>
#include <cstddef>

namespace qrkit {

template <class T, std::size_t N>
struct Dual {
  T v{};
  std::array<T, N> d{};

  Dual() = default;
  Dual(T value) : v(value) {}  // NOLINT(google-explicit-constructor): constants mix freely

  /// The k-th independent variable with value `value`.
  static Dual variable(T value, std::size_t k) {
    Dual x(value);
    x.d[k] = T(1);
    return x;
  }

  Dual& operator+=(const Dual& o) {
    v += o.v;
    for (std::size_t i = 0; i < N; ++i) d[i] += o.d[i];
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v -= o.v;
    for (std::size_t i = 0; i < N; ++i) d[i] -= o.d[i];
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    for (std::size_t i = 0; i < N; ++i) d[i] = d[i] * o.v + v * o.d[i];
    v *= o.v;
    return *this;
  }
  Dual& operator/=(const Dual& o) {
    const T inv = T(1) / o.v;
    const T q = v * inv;
    for (std::size_t i = 0; i < N; ++i) d[i] = (d[i] - q * o.d[i]) * inv;
    v = q;
    return *this;
  }

  friend Dual operator+(Dual a, const Dual& b) { return a += b; }
  friend Dual operator-(Dual a, const Dual& b) { return a -= b; }
  friend Dual operator*(Dual a, const Dual& b) { return a *= b; }
  friend Dual operator/(Dual a, const Dual& b) { return a /= b; }
  friend Dual operator-(Dual a) {
    a.v = -a.v;
    for (auto& x : a.d) x = -x;
    return a;
  }
};

namespace detail {

template <class T, std::size_t N>
Dual<T, N> chain(const Dual<T, N>& x, T value, T derivative) {
  Dual<T, N> r(value);
  for (std::size_t i = 0; i < N; ++i) r.d[i] = derivative * x.d[i];
  return r;
}

}  // namespace detail

template <class T, std::size_t N>
Dual<T, N> sin(const Dual<T, N>& x) {
  return detail::chain(x, std::sin(x.v), std::cos(x.v));
}

template <class T, std::size_t N>
Dual<T, N> cos(const Dual<T, N>& x) {
  return detail::chain(x, std::cos(x.v), -std::sin(x.v));
}

template <class T, std::size_t N>
Dual<T, N> sqrt(const Dual<T, N>& x) {
  const T s = std::sqrt(x.v);
  return detail::chain(x, s, T(0.5) / s);
}

template <class T>
T value_of(const T& x) {
  return x;
}

template <class T, std::size_t N>
T value_of(const Dual<T, N>& x) {
  return x.v;
}

}  // namespace qrkit
