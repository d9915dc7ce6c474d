#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "geolab/vec2.hpp"

namespace geolab {

/// Value, gradient and Hessian of a scalar field at a point.
struct Jet2 {
  double value = 0.0;
  Vec2 grad;
  Mat2 hess;
};

/// Real trigonometric polynomial on the unit 2-torus in the Hartley ("cas")
/// basis:
///
///   f(x, y) = sum_k c_k cas(2 pi (k1 x + k2 y)),   cas t = cos t + sin t.
///
/// Every real coefficient map is admissible. The even part of f is carried
/// by the symmetric combination c_k + c_{-k}, so even fields (such as the
/// bump exponents) have c_{-k} = c_k.
class TrigPoly2 {
 public:
  using Frequency = std::pair<int, int>;

  TrigPoly2() = default;
  explicit TrigPoly2(std::map<Frequency, double> coeffs);

  static TrigPoly2 constant(double c);
  /// a cos(2 pi (k1 x + k2 y)) + b sin(2 pi (k1 x + k2 y)).
  static TrigPoly2 cos_sin(int k1, int k2, double a, double b);

  const std::map<Frequency, double>& coeffs() const { return coeffs_; }
  int max_order() const { return max_order_; }
  bool is_zero() const { return terms_.empty(); }

  double value(const Vec2& p) const;
  Vec2 gradient(const Vec2& p) const;
  /// Value, gradient, and Hessian from one pass over the terms.
  Jet2 jet(const Vec2& p) const;
  /// Value and gradient only.
  double value_grad(const Vec2& p, Vec2& grad) const;
  double laplacian(const Vec2& p) const;

  TrigPoly2 operator+(const TrigPoly2& o) const;
  TrigPoly2 operator-(const TrigPoly2& o) const;
  TrigPoly2 operator*(double s) const;
  /// Exact product; frequencies add.
  TrigPoly2 operator*(const TrigPoly2& o) const;

  bool operator==(const TrigPoly2& o) const { return coeffs_ == o.coeffs_; }

 private:
  struct Term {
    int k1, k2;
    double c;
  };
  void rebuild();
  template <int Order>
  void accumulate(const Vec2& p, double* out) const;

  std::map<Frequency, double> coeffs_;
  std::vector<Term> terms_;
  int max_order_ = 0;
};

}  // namespace geolab
