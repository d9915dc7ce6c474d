#pragma once

#include <array>
#include <cmath>
#include <complex>

namespace geolab {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr double operator[](int i) const { return i == 0 ? x : y; }
  constexpr double& operator[](int i) { return i == 0 ? x : y; }

  constexpr Vec2& operator+=(const Vec2& o) { x += o.x; y += o.y; return *this; }
  constexpr Vec2& operator-=(const Vec2& o) { x -= o.x; y -= o.y; return *this; }
  constexpr Vec2& operator*=(double s) { x *= s; y *= s; return *this; }
  constexpr bool operator==(const Vec2&) const = default;
};

constexpr Vec2 operator+(Vec2 a, const Vec2& b) { return a += b; }
constexpr Vec2 operator-(Vec2 a, const Vec2& b) { return a -= b; }
constexpr Vec2 operator-(const Vec2& a) { return {-a.x, -a.y}; }
constexpr Vec2 operator*(double s, Vec2 a) { return a *= s; }
constexpr Vec2 operator*(Vec2 a, double s) { return a *= s; }
constexpr Vec2 operator/(Vec2 a, double s) { return a *= (1.0 / s); }

constexpr double dot(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(const Vec2& a, const Vec2& b) { return a.x * b.y - a.y * b.x; }
inline double norm(const Vec2& a) { return std::hypot(a.x, a.y); }
constexpr double norm2(const Vec2& a) { return dot(a, a); }

/// Integer class in H_1(T^2; Z).
struct Winding {
  int m1 = 0;
  int m2 = 0;

  constexpr Vec2 vec() const { return {double(m1), double(m2)}; }
  constexpr bool operator==(const Winding&) const = default;
};

/// Row-major 2x2 matrix.
struct Mat2 {
  double a11 = 0.0, a12 = 0.0, a21 = 0.0, a22 = 0.0;

  static constexpr Mat2 identity() { return {1.0, 0.0, 0.0, 1.0}; }

  constexpr double operator()(int i, int j) const {
    return i == 0 ? (j == 0 ? a11 : a12) : (j == 0 ? a21 : a22);
  }
  constexpr double det() const { return a11 * a22 - a12 * a21; }
  constexpr double trace() const { return a11 + a22; }
  constexpr Vec2 operator*(const Vec2& v) const {
    return {a11 * v.x + a12 * v.y, a21 * v.x + a22 * v.y};
  }
  constexpr Mat2 operator*(const Mat2& o) const {
    return {a11 * o.a11 + a12 * o.a21, a11 * o.a12 + a12 * o.a22,
            a21 * o.a11 + a22 * o.a21, a21 * o.a12 + a22 * o.a22};
  }
  constexpr Mat2 operator*(double s) const { return {a11 * s, a12 * s, a21 * s, a22 * s}; }
  constexpr Mat2 operator+(const Mat2& o) const {
    return {a11 + o.a11, a12 + o.a12, a21 + o.a21, a22 + o.a22};
  }
  constexpr Mat2 operator-(const Mat2& o) const {
    return {a11 - o.a11, a12 - o.a12, a21 - o.a21, a22 - o.a22};
  }
};

/// Eigenvalues of a real 2x2 matrix, sorted by decreasing modulus.
inline std::array<std::complex<double>, 2> eigenvalues(const Mat2& m) {
  const double half_tr = 0.5 * m.trace();
  const double disc = half_tr * half_tr - m.det();
  std::complex<double> l1, l2;
  if (disc >= 0.0) {
    const double s = std::sqrt(disc);
    // Avoid cancellation in the smaller root.
    const double big = half_tr >= 0.0 ? half_tr + s : half_tr - s;
    l1 = big;
    l2 = big != 0.0 ? m.det() / big : 0.0;
  } else {
    const double s = std::sqrt(-disc);
    l1 = {half_tr, s};
    l2 = {half_tr, -s};
  }
  if (std::abs(l2) > std::abs(l1)) std::swap(l1, l2);
  return {l1, l2};
}

/// Unit eigenvector of m for a real eigenvalue lambda.
inline Vec2 eigenvector(const Mat2& m, double lambda) {
  // Rows of (m - lambda I) are orthogonal to the eigenvector; use the larger one.
  const Vec2 r1{m.a11 - lambda, m.a12};
  const Vec2 r2{m.a21, m.a22 - lambda};
  const Vec2 r = norm2(r1) >= norm2(r2) ? r1 : r2;
  Vec2 v{-r.y, r.x};
  const double n = norm(v);
  if (n == 0.0) return {1.0, 0.0};
  return v / n;
}

/// Shortest representative of a displacement on the unit torus.
inline Vec2 torus_delta(const Vec2& a, const Vec2& b) {
  Vec2 d = b - a;
  d.x -= std::round(d.x);
  d.y -= std::round(d.y);
  return d;
}

}  // namespace geolab
