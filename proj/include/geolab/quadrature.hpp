#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "geolab/vec2.hpp"

namespace geolab {

/// Gauss-Legendre rule on [-1, 1] with n nodes (Newton on P_n).
struct GaussLegendre {
  std::vector<double> nodes;
  std::vector<double> weights;

  explicit GaussLegendre(int n) : nodes(n), weights(n) {
    for (int i = 0; i < n; ++i) {
      double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
      double dp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
          const double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        dp = n * (x * p1 - p0) / (x * x - 1);
        const double dx = p1 / dp;
        x -= dx;
        if (std::abs(dx) < 1e-16) break;
      }
      nodes[n - 1 - i] = x;
      weights[n - 1 - i] = 2 / ((1 - x * x) * dp * dp);
    }
  }
};

/// Composite rule on [a, b]: (node, weight) pairs in increasing order.
inline std::vector<std::pair<double, double>> composite_gauss(double a, double b, int panels, int order = 8) {
  const GaussLegendre g(order);
  std::vector<std::pair<double, double>> out;
  out.reserve(std::size_t(panels) * order);
  const double w = (b - a) / panels;
  for (int p = 0; p < panels; ++p) {
    const double mid = a + (p + 0.5) * w;
    for (int i = 0; i < order; ++i) out.emplace_back(mid + 0.5 * w * g.nodes[i], 0.5 * w * g.weights[i]);
  }
  return out;
}

}  // namespace geolab
