#include "geolab/trig_poly.hpp"

#include <algorithm>
#include <cstdlib>

namespace geolab {

namespace {

constexpr int kStackOrder = 16;

// Powers z^k for k in [-order, order], stored at index k + order.
void unit_powers(double angle, int order, std::complex<double>* out) {
  const std::complex<double> z{std::cos(angle), std::sin(angle)};
  out[order] = 1.0;
  for (int k = 1; k <= order; ++k) {
    out[order + k] = out[order + k - 1] * z;
    out[order - k] = std::conj(out[order + k]);
  }
}

}  // namespace

TrigPoly2::TrigPoly2(std::map<Frequency, double> coeffs) : coeffs_(std::move(coeffs)) {
  rebuild();
}

TrigPoly2 TrigPoly2::constant(double c) { return TrigPoly2({{{0, 0}, c}}); }

TrigPoly2 TrigPoly2::cos_sin(int k1, int k2, double a, double b) {
  // cos t = (cas t + cas(-t))/2, sin t = (cas t - cas(-t))/2.
  if (k1 == 0 && k2 == 0) return constant(a);
  std::map<Frequency, double> c;
  c[{k1, k2}] += 0.5 * (a + b);
  c[{-k1, -k2}] += 0.5 * (a - b);
  return TrigPoly2(std::move(c));
}

void TrigPoly2::rebuild() {
  terms_.clear();
  max_order_ = 0;
  for (auto it = coeffs_.begin(); it != coeffs_.end();) {
    if (it->second == 0.0) {
      it = coeffs_.erase(it);
      continue;
    }
    terms_.push_back({it->first.first, it->first.second, it->second});
    max_order_ = std::max({max_order_, std::abs(it->first.first), std::abs(it->first.second)});
    ++it;
  }
}

// out: value, gx, gy, hxx, hxy, hyy (as many as Order requests).
template <int Order>
void TrigPoly2::accumulate(const Vec2& p, double* out) const {
  const int n = max_order_;
  std::complex<double> stack_x[2 * kStackOrder + 1], stack_y[2 * kStackOrder + 1];
  std::vector<std::complex<double>> heap_x, heap_y;
  std::complex<double>* zx = stack_x;
  std::complex<double>* zy = stack_y;
  if (n > kStackOrder) {
    heap_x.resize(2 * n + 1);
    heap_y.resize(2 * n + 1);
    zx = heap_x.data();
    zy = heap_y.data();
  }
  unit_powers(kTwoPi * p.x, n, zx);
  unit_powers(kTwoPi * p.y, n, zy);

  double v = 0, gx = 0, gy = 0, hxx = 0, hxy = 0, hyy = 0;
  for (const Term& t : terms_) {
    const std::complex<double> w = zx[n + t.k1] * zy[n + t.k2];
    const double cas = w.real() + w.imag();
    v += t.c * cas;
    if constexpr (Order >= 1) {
      // d/dt cas t = cos t - sin t.
      const double dcas = t.c * kTwoPi * (w.real() - w.imag());
      gx += dcas * t.k1;
      gy += dcas * t.k2;
    }
    if constexpr (Order >= 2) {
      const double h = -t.c * kTwoPi * kTwoPi * cas;
      hxx += h * t.k1 * t.k1;
      hxy += h * t.k1 * t.k2;
      hyy += h * t.k2 * t.k2;
    }
  }
  out[0] = v;
  if constexpr (Order >= 1) {
    out[1] = gx;
    out[2] = gy;
  }
  if constexpr (Order >= 2) {
    out[3] = hxx;
    out[4] = hxy;
    out[5] = hyy;
  }
}

double TrigPoly2::value(const Vec2& p) const {
  if (terms_.empty()) return 0.0;
  double out[1];
  accumulate<0>(p, out);
  return out[0];
}

Vec2 TrigPoly2::gradient(const Vec2& p) const {
  Vec2 g;
  value_grad(p, g);
  return g;
}

double TrigPoly2::value_grad(const Vec2& p, Vec2& grad) const {
  if (terms_.empty()) {
    grad = {};
    return 0.0;
  }
  double out[3];
  accumulate<1>(p, out);
  grad = {out[1], out[2]};
  return out[0];
}

Jet2 TrigPoly2::jet(const Vec2& p) const {
  if (terms_.empty()) return {};
  double out[6];
  accumulate<2>(p, out);
  return {out[0], {out[1], out[2]}, {out[3], out[4], out[4], out[5]}};
}

double TrigPoly2::laplacian(const Vec2& p) const {
  const Jet2 j = jet(p);
  return j.hess.trace();
}

TrigPoly2 TrigPoly2::operator+(const TrigPoly2& o) const {
  auto c = coeffs_;
  for (const auto& [k, v] : o.coeffs_) c[k] += v;
  return TrigPoly2(std::move(c));
}

TrigPoly2 TrigPoly2::operator-(const TrigPoly2& o) const { return *this + o * -1.0; }

TrigPoly2 TrigPoly2::operator*(double s) const {
  auto c = coeffs_;
  for (auto& [k, v] : c) v *= s;
  return TrigPoly2(std::move(c));
}

TrigPoly2 TrigPoly2::operator*(const TrigPoly2& o) const {
  // cas a cas b = [cas(a+b) + cas(a-b) + cas(-a+b) - cas(-a-b)] / 2.
  std::map<Frequency, double> c;
  for (const auto& [ka, va] : coeffs_) {
    for (const auto& [kb, vb] : o.coeffs_) {
      const double h = 0.5 * va * vb;
      c[{ka.first + kb.first, ka.second + kb.second}] += h;
      c[{ka.first - kb.first, ka.second - kb.second}] += h;
      c[{-ka.first + kb.first, -ka.second + kb.second}] += h;
      c[{-ka.first - kb.first, -ka.second - kb.second}] -= h;
    }
  }
  return TrigPoly2(std::move(c));
}

}  // namespace geolab
