#pragma once

#include "geolab/metric.hpp"
#include "geolab/ode.hpp"

namespace geolab::detail {

// x'' = -(grad rho . v) v + |v|^2 grad rho / 2 for g = exp(rho) delta.
struct GeodesicRhs {
  const TrigPoly2* rho;

  void operator()(double, const OdeState<4>& s, OdeState<4>& ds) const {
    Vec2 g;
    rho->value_grad({s[0], s[1]}, g);
    const Vec2 v{s[2], s[3]};
    const double gv = dot(g, v);
    const double half_v2 = 0.5 * norm2(v);
    ds[0] = v.x;
    ds[1] = v.y;
    ds[2] = -gv * v.x + half_v2 * g.x;
    ds[3] = -gv * v.y + half_v2 * g.y;
  }
};

// Geodesic plus two scalar Jacobi solutions J'' = -K |v|_g^2 J, where
// K |v|_g^2 = -Laplacian(rho) |v|^2 / 2 (Euclidean |v|).
struct GeodesicJacobiRhs {
  const TrigPoly2* rho;

  void operator()(double, const OdeState<8>& s, OdeState<8>& ds) const {
    const Jet2 j = rho->jet({s[0], s[1]});
    const Vec2 v{s[2], s[3]};
    const double gv = dot(j.grad, v);
    const double v2 = norm2(v);
    ds[0] = v.x;
    ds[1] = v.y;
    ds[2] = -gv * v.x + 0.5 * v2 * j.grad.x;
    ds[3] = -gv * v.y + 0.5 * v2 * j.grad.y;
    const double kappa = -0.5 * j.hess.trace() * v2;
    ds[4] = s[5];
    ds[5] = -kappa * s[4];
    ds[6] = s[7];
    ds[7] = -kappa * s[6];
  }
};

inline OdeState<4> pack(const Vec2& p, const Vec2& v) { return {p.x, p.y, v.x, v.y}; }

}  // namespace geolab::detail
