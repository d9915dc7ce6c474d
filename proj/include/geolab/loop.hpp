#pragma once

#include <stdexcept>
#include <vector>

#include "geolab/vec2.hpp"

namespace geolab {

/// Closed discretized curve. Nodes are lifted to the plane; the implied
/// closing node is nodes[0] + winding, so lifted closure holds exactly.
/// Node i sits at time i * period / N.
class Loop {
 public:
  static constexpr std::size_t kMinNodes = 16;

  Loop(std::vector<Vec2> nodes, double period, Winding winding)
      : nodes_(std::move(nodes)), period_(period), winding_(winding) {
    if (nodes_.size() < kMinNodes) throw std::invalid_argument("Loop: at least 16 nodes required");
    if (!(period_ > 0.0)) throw std::invalid_argument("Loop: period must be positive");
  }

  /// Straight loop from origin with the given winding.
  static Loop straight(const Vec2& origin, Winding winding, double period, std::size_t n) {
    std::vector<Vec2> nodes(n);
    for (std::size_t i = 0; i < n; ++i) nodes[i] = origin + (double(i) / double(n)) * winding.vec();
    return Loop(std::move(nodes), period, winding);
  }

  std::size_t size() const { return nodes_.size(); }
  const std::vector<Vec2>& nodes() const { return nodes_; }
  std::vector<Vec2>& mutable_nodes() { return nodes_; }
  double period() const { return period_; }
  Winding winding() const { return winding_; }
  double dt() const { return period_ / double(nodes_.size()); }

  /// Node i for i in [0, N]; node N is the lifted closing node.
  Vec2 node(std::size_t i) const {
    const std::size_t n = nodes_.size();
    return i < n ? nodes_[i] : nodes_[i % n] + double(i / n) * winding_.vec();
  }

  Loop with_period(double period) const { return Loop(nodes_, period, winding_); }

 private:
  std::vector<Vec2> nodes_;
  double period_;
  Winding winding_;
};

}  // namespace geolab
