#pragma once

// Static 3-d tree for nearest-neighbour queries on point clouds.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "aot/geometry.hpp"

namespace aot {

class KdTree {
public:
  KdTree() = default;

  explicit KdTree(std::span<const Vec3d> points) : points_(points.begin(), points.end()) {
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0u);
    nodes_.reserve(2 * points_.size() / kLeaf + 2);
    if (!points_.empty()) build(0, static_cast<std::uint32_t>(points_.size()));
  }

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const Vec3d& point(std::size_t i) const { return points_[i]; }

  struct Hit {
    std::size_t index = 0;
    double sq_dist = std::numeric_limits<double>::infinity();
  };

  // Nearest stored point; ties resolve to the lowest index.
  Hit nearest(const Vec3d& q) const {
    Hit best;
    if (!nodes_.empty()) search(0, q, best, kNone);
    return best;
  }

  // Nearest stored point other than the one with index `self`.
  Hit nearest_other(std::size_t self) const {
    Hit best;
    if (nodes_.size() && points_.size() > 1) search(0, points_[self], best, static_cast<std::uint32_t>(self));
    return best;
  }

private:
  static constexpr std::uint32_t kLeaf = 8;
  static constexpr std::uint32_t kNone = 0xffffffffu;

  struct Node {
    std::uint32_t begin, end;
    std::int32_t left = -1, right = -1;
    int axis = 0;
    double split = 0.0;
    Vec3d lo, hi;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end) {
    Node n{begin, end};
    n.lo = n.hi = points_[order_[begin]];
    for (std::uint32_t i = begin; i < end; ++i) {
      const Vec3d& p = points_[order_[i]];
      for (std::size_t k = 0; k < 3; ++k) {
        n.lo[k] = std::min(n.lo[k], p[k]);
        n.hi[k] = std::max(n.hi[k], p[k]);
      }
    }
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back(n);
    if (end - begin <= kLeaf) return id;
    int axis = 0;
    for (int k = 1; k < 3; ++k)
      if (n.hi[k] - n.lo[k] > n.hi[axis] - n.lo[axis]) axis = k;
    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                       const double pa = points_[a][axis], pb = points_[b][axis];
                       return pa < pb || (pa == pb && a < b);
                     });
    const std::int32_t l = build(begin, mid);
    const std::int32_t r = build(mid, end);
    nodes_[id].axis = axis;
    nodes_[id].split = points_[order_[mid]][axis];
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  static double box_sq_dist(const Node& n, const Vec3d& q) {
    double d = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      const double e = std::max({n.lo[k] - q[k], 0.0, q[k] - n.hi[k]});
      d += e * e;
    }
    return d;
  }

  void search(std::int32_t id, const Vec3d& q, Hit& best, std::uint32_t skip) const {
    const Node& n = nodes_[id];
    if (box_sq_dist(n, q) > best.sq_dist) return;
    if (n.left < 0) {
      for (std::uint32_t i = n.begin; i < n.end; ++i) {
        const std::uint32_t idx = order_[i];
        if (idx == skip) continue;
        const double d = squared_norm(points_[idx] - q);
        if (d < best.sq_dist || (d == best.sq_dist && idx < best.index)) best = {idx, d};
      }
      return;
    }
    const bool left_first = q[n.axis] < n.split;
    search(left_first ? n.left : n.right, q, best, skip);
    search(left_first ? n.right : n.left, q, best, skip);
  }

  std::vector<Vec3d> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace aot
