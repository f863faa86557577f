#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include "ndt/geometry.hpp"

namespace ndt {

struct Triangle {
  Vec3 a, b, c;

  Vec3 centroid() const { return (a + b + c) / 3.0; }
  Aabb bounds() const {
    Aabb box;
    box.expand(a);
    box.expand(b);
    box.expand(c);
    return box;
  }
};

struct RayHit {
  double t = 0.0;
  std::uint32_t tri = 0;
};

// Moller-Trumbore; returns the ray parameter or nothing. Hits within ~1e-12
// of parallel are rejected.
inline std::optional<double> intersect_triangle(const Vec3& origin, const Vec3& dir,
                                                const Triangle& tri) {
  const Vec3 e1 = tri.b - tri.a;
  const Vec3 e2 = tri.c - tri.a;
  const Vec3 p = dir.cross(e2);
  const double det = e1.dot(p);
  if (std::abs(det) < 1e-12) return std::nullopt;
  const double inv_det = 1.0 / det;
  const Vec3 s = origin - tri.a;
  const double u = s.dot(p) * inv_det;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vec3 q = s.cross(e1);
  const double v = dir.dot(q) * inv_det;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  return e2.dot(q) * inv_det;
}

// Binary BVH, median split on the longest centroid axis.
class Bvh {
 public:
  Bvh() = default;

  explicit Bvh(std::vector<Triangle> triangles) : triangles_(std::move(triangles)) {
    order_.resize(triangles_.size());
    std::iota(order_.begin(), order_.end(), 0u);
    if (!triangles_.empty()) {
      nodes_.reserve(2 * triangles_.size());
      build(0, static_cast<std::uint32_t>(order_.size()));
    }
  }

  const std::vector<Triangle>& triangles() const { return triangles_; }
  bool empty() const { return triangles_.empty(); }

  // Nearest hit with t in [tmin, tmax]; equal-t ties go to the smallest
  // triangle index.
  std::optional<RayHit> nearest(const Vec3& origin, const Vec3& dir, double tmin,
                                double tmax) const {
    std::optional<RayHit> best;
    if (nodes_.empty()) return best;
    std::uint32_t stack[64];
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
      const Node& node = nodes_[stack[--top]];
      double t0 = tmin;
      double t1 = best ? std::min(tmax, best->t) : tmax;
      if (!node.box.clip(origin, dir, t0, t1)) continue;
      if (node.count > 0) {
        for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
          const std::uint32_t tri = order_[i];
          if (auto t = intersect_triangle(origin, dir, triangles_[tri])) {
            if (*t < tmin || *t > tmax) continue;
            if (!best || *t < best->t || (*t == best->t && tri < best->tri))
              best = RayHit{*t, tri};
          }
        }
      } else {
        stack[top++] = node.right;
        stack[top++] = node.left;
      }
    }
    return best;
  }

  // Brute-force twin of nearest(); the acceleration structure must agree with
  // this on every query.
  std::optional<RayHit> nearest_brute(const Vec3& origin, const Vec3& dir, double tmin,
                                      double tmax) const {
    std::optional<RayHit> best;
    for (std::uint32_t tri = 0; tri < triangles_.size(); ++tri) {
      if (auto t = intersect_triangle(origin, dir, triangles_[tri])) {
        if (*t < tmin || *t > tmax) continue;
        if (!best || *t < best->t || (*t == best->t && tri < best->tri))
          best = RayHit{*t, tri};
      }
    }
    return best;
  }

  // All hits with t in (tmin, tmax), sorted by (t, triangle index).
  void collect(const Vec3& origin, const Vec3& dir, double tmin, double tmax,
               std::vector<RayHit>& out) const {
    out.clear();
    if (nodes_.empty()) return;
    std::uint32_t stack[64];
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
      const Node& node = nodes_[stack[--top]];
      double t0 = tmin;
      double t1 = tmax;
      if (!node.box.clip(origin, dir, t0, t1)) continue;
      if (node.count > 0) {
        for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
          const std::uint32_t tri = order_[i];
          if (auto t = intersect_triangle(origin, dir, triangles_[tri])) {
            if (*t > tmin && *t < tmax) out.push_back({*t, tri});
          }
        }
      } else {
        stack[top++] = node.right;
        stack[top++] = node.left;
      }
    }
    std::sort(out.begin(), out.end(), [](const RayHit& a, const RayHit& b) {
      return a.t != b.t ? a.t < b.t : a.tri < b.tri;
    });
  }

  void collect_brute(const Vec3& origin, const Vec3& dir, double tmin, double tmax,
                     std::vector<RayHit>& out) const {
    out.clear();
    for (std::uint32_t tri = 0; tri < triangles_.size(); ++tri) {
      if (auto t = intersect_triangle(origin, dir, triangles_[tri])) {
        if (*t > tmin && *t < tmax) out.push_back({*t, tri});
      }
    }
    std::sort(out.begin(), out.end(), [](const RayHit& a, const RayHit& b) {
      return a.t != b.t ? a.t < b.t : a.tri < b.tri;
    });
  }

 private:
  struct Node {
    Aabb box;
    std::uint32_t left = 0;
    std::uint32_t right = 0;
    std::uint32_t first = 0;
    std::uint32_t count = 0;  // leaf iff count > 0
  };

  static constexpr std::uint32_t kLeafSize = 4;

  std::uint32_t build(std::uint32_t first, std::uint32_t count) {
    const std::uint32_t idx = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back({});
    Aabb box;
    for (std::uint32_t i = first; i < first + count; ++i)
      box.expand(triangles_[order_[i]].bounds());
    nodes_[idx].box = box;

    if (count <= kLeafSize) {
      nodes_[idx].first = first;
      nodes_[idx].count = count;
      std::sort(order_.begin() + first, order_.begin() + first + count);
      return idx;
    }

    Aabb cbox;
    for (std::uint32_t i = first; i < first + count; ++i)
      cbox.expand(triangles_[order_[i]].centroid());
    const Vec3 ext = cbox.extent();
    const int axis = ext.x >= ext.y ? (ext.x >= ext.z ? 0 : 2) : (ext.y >= ext.z ? 1 : 2);

    const std::uint32_t mid = first + count / 2;
    std::nth_element(order_.begin() + first, order_.begin() + mid,
                     order_.begin() + first + count,
                     [&](std::uint32_t a, std::uint32_t b) {
                       const double ca = triangles_[a].centroid()[axis];
                       const double cb = triangles_[b].centroid()[axis];
                       return ca != cb ? ca < cb : a < b;
                     });

    const std::uint32_t left = build(first, mid - first);
    const std::uint32_t right = build(mid, first + count - mid);
    nodes_[idx].left = left;
    nodes_[idx].right = right;
    return idx;
  }

  std::vector<Triangle> triangles_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace ndt
