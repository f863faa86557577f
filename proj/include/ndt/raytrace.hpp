#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "json.hpp"
#include "ndt/bvh.hpp"
#include "ndt/geometry.hpp"
#include "ndt/mesh.hpp"

namespace ndt {

struct TxConfig {
  Vec3 position;
  double power_dbm = 43.0;
  double frequency_hz = 1.8e9;
  double tx_gain_dbi = 0.0;
  double rx_gain_dbi = 0.0;

  bool operator==(const TxConfig&) const = default;

  void validate() const {
    if (!(frequency_hz > 0.0))
      throw Error(ErrorCode::invariant_violation, "frequency must be > 0");
    if (!std::isfinite(power_dbm))
      throw Error(ErrorCode::invariant_violation, "tx power must be finite");
    if (!position.finite())
      throw Error(ErrorCode::invariant_violation, "tx position must be finite");
  }
};

struct MaterialModel {
  double reflection_loss_db = 6.0;   // per specular bounce
  double transmission_loss_db = 10.0;  // per surface penetration

  bool operator==(const MaterialModel&) const = default;

  void validate() const {
    if (reflection_loss_db < 0.0 || transmission_loss_db < 0.0)
      throw Error(ErrorCode::invariant_violation, "material losses must be >= 0");
  }
};

struct PropagationPath {
  std::vector<Vec3> vertices;  // tx, bounce points..., rx
  double length_m = 0.0;
  int bounces = 0;
  int penetrations = 0;
  double power_dbm = 0.0;
};

inline double fspl(double distance_m, double frequency_hz) {
  if (!(distance_m > 0.0))
    throw Error(ErrorCode::non_positive_distance, "FSPL needs distance > 0");
  return 20.0 * std::log10(4.0 * M_PI * distance_m * frequency_hz / kSpeedOfLight);
}

// Non-coherent power sum.
inline double received_power(const std::vector<PropagationPath>& paths) {
  if (paths.empty()) throw Error(ErrorCode::empty_path_list, "no paths to sum");
  double linear = 0.0;
  for (const auto& p : paths) linear += std::pow(10.0, p.power_dbm / 10.0);
  return 10.0 * std::log10(linear);
}

// Reflecting plane n.p = d with canonical orientation (first nonzero normal
// component positive), shared by all coplanar triangles.
struct ScenePlane {
  Vec3 normal;
  double d = 0.0;
  std::vector<std::uint32_t> tris;
};

// Immutable traced geometry: triangles, BVH, and the deduplicated plane set
// used for image-method mirroring.
class Scene {
 public:
  Scene() = default;

  explicit Scene(const TriangleMesh& mesh) {
    mesh.validate();
    std::vector<Triangle> tris;
    tris.reserve(mesh.triangle_count());
    for (const auto& t : mesh.triangles) {
      const Triangle tri{mesh.vertices[t[0]].to_vec3(), mesh.vertices[t[1]].to_vec3(),
                         mesh.vertices[t[2]].to_vec3()};
      if (!tri.a.finite() || !tri.b.finite() || !tri.c.finite())
        throw Error(ErrorCode::degenerate_scene, "non-finite triangle vertex");
      tris.push_back(tri);
    }
    bvh_ = Bvh(std::move(tris));
    build_planes();
    for (const auto& t : bvh_.triangles()) {
      bounds_.expand(t.bounds());
    }
  }

  const Bvh& bvh() const { return bvh_; }
  const std::vector<ScenePlane>& planes() const { return planes_; }
  std::uint32_t plane_of(std::uint32_t tri) const { return tri_plane_[tri]; }
  const Aabb& bounds() const { return bounds_; }
  bool empty() const { return bvh_.empty(); }

  void segment_hits(const Vec3& a, const Vec3& b, double tmin, double tmax, bool use_bvh,
                    std::vector<RayHit>& out) const {
    if (use_bvh)
      bvh_.collect(a, b - a, tmin, tmax, out);
    else
      bvh_.collect_brute(a, b - a, tmin, tmax, out);
  }

  // Point membership in the merged coplanar geometry of one plane.
  bool on_plane_geometry(std::uint32_t plane_id, const Vec3& p) const {
    const double eps = 1e-9;
    for (std::uint32_t ti : planes_[plane_id].tris) {
      const Triangle& t = bvh_.triangles()[ti];
      const Vec3 n = (t.b - t.a).cross(t.c - t.a);
      const double nn = n.dot(n);
      const Vec3 w = p - t.a;
      const double u = (t.b - t.a).cross(w).dot(n) / nn;   // weight of c
      const double v = w.cross(t.c - t.a).dot(n) / nn;     // weight of b
      if (v >= -eps && u >= -eps && u + v <= 1.0 + eps) return true;
    }
    return false;
  }

 private:
  void build_planes() {
    const double quantum = 1e-6;
    std::map<std::array<long long, 4>, std::uint32_t> keys;
    tri_plane_.resize(bvh_.triangles().size());
    for (std::uint32_t i = 0; i < bvh_.triangles().size(); ++i) {
      const Triangle& t = bvh_.triangles()[i];
      Vec3 n = (t.b - t.a).cross(t.c - t.a).normalized();
      double d = n.dot(t.a);
      // canonical sign
      double lead = std::abs(n.x) > 1e-9 ? n.x : (std::abs(n.y) > 1e-9 ? n.y : n.z);
      if (lead < 0.0) {
        n = -n;
        d = -d;
      }
      const std::array<long long, 4> key{std::llround(n.x / quantum),
                                         std::llround(n.y / quantum),
                                         std::llround(n.z / quantum),
                                         std::llround(d / quantum)};
      auto [it, inserted] = keys.try_emplace(key, static_cast<std::uint32_t>(planes_.size()));
      if (inserted) planes_.push_back({n, d, {}});
      planes_[it->second].tris.push_back(i);
      tri_plane_[i] = it->second;
    }
  }

  Bvh bvh_;
  std::vector<ScenePlane> planes_;
  std::vector<std::uint32_t> tri_plane_;
  Aabb bounds_;
};

inline Scene build_scene(const TriangleMesh& mesh) { return Scene(mesh); }

namespace detail {

inline Vec3 mirror_point(const Vec3& p, const ScenePlane& plane) {
  return p - 2.0 * (plane.normal.dot(p) - plane.d) * plane.normal;
}

// Number of distinct crossing positions among sorted hits; coincident hits
// (coplanar triangle pairs at a shared edge) collapse into one.
inline int count_crossings(const std::vector<RayHit>& hits) {
  int n = 0;
  double last = -1.0;
  for (const auto& h : hits) {
    if (n == 0 || h.t - last > 1e-9) {
      ++n;
      last = h.t;
    }
  }
  return n;
}

}  // namespace detail

// Image-method multipath: the direct path plus every valid specular sequence
// of reflecting planes up to max_order. Sub-segments may cross surfaces; each
// crossing is a counted penetration.
inline std::vector<PropagationPath> trace_paths(const Scene& scene, const TxConfig& tx,
                                                const Vec3& rx, int max_order,
                                                const MaterialModel& material = {},
                                                bool use_bvh = true) {
  tx.validate();
  material.validate();
  if (max_order < 0 || max_order > 3)
    throw Error(ErrorCode::invariant_violation, "max_order must be in [0, 3]");
  if ((rx - tx.position).norm() == 0.0)
    throw Error(ErrorCode::invariant_violation, "rx must differ from tx");
  if (!rx.finite()) throw Error(ErrorCode::degenerate_scene, "rx not finite");

  const double end_eps_m = 1e-6;  // offset when leaving a surface
  std::vector<PropagationPath> paths;
  std::vector<RayHit> hits;

  auto finish_path = [&](std::vector<Vec3> vertices, int bounces) {
    PropagationPath path;
    path.vertices = std::move(vertices);
    path.bounces = bounces;
    double length = 0.0;
    int penetrations = 0;
    for (std::size_t i = 0; i + 1 < path.vertices.size(); ++i) {
      const Vec3& a = path.vertices[i];
      const Vec3& b = path.vertices[i + 1];
      const double seg = (b - a).norm();
      if (seg == 0.0) return;  // degenerate bounce geometry
      length += seg;
      const double te = end_eps_m / seg;
      scene.segment_hits(a, b, te, 1.0 - te, use_bvh, hits);
      penetrations += detail::count_crossings(hits);
    }
    path.length_m = length;
    path.penetrations = penetrations;
    path.power_dbm = tx.power_dbm + tx.tx_gain_dbi + tx.rx_gain_dbi -
                     fspl(length, tx.frequency_hz) -
                     path.bounces * material.reflection_loss_db -
                     path.penetrations * material.transmission_loss_db;
    paths.push_back(std::move(path));
  };

  // direct
  finish_path({tx.position, rx}, 0);

  // reflections: enumerate plane sequences, mirror tx forward, backtrace from rx
  const auto& planes = scene.planes();
  std::vector<std::uint32_t> seq;
  std::vector<Vec3> images;  // images[i] = tx mirrored across seq[0..i]

  auto backtrace = [&](int order) {
    std::vector<Vec3> pts(static_cast<std::size_t>(order) + 2);
    pts.front() = tx.position;
    pts.back() = rx;
    Vec3 src = rx;
    for (int i = order - 1; i >= 0; --i) {
      const ScenePlane& plane = planes[seq[i]];
      const Vec3& image = images[i];
      const Vec3 dir = image - src;
      const double denom = plane.normal.dot(dir);
      if (std::abs(denom) < 1e-12) return;
      const double s = (plane.d - plane.normal.dot(src)) / denom;
      if (s <= 1e-9 || s >= 1.0 - 1e-9) return;
      const Vec3 q = src + dir * s;
      if (!scene.on_plane_geometry(seq[i], q)) return;
      pts[static_cast<std::size_t>(i) + 1] = q;
      src = q;
    }
    finish_path(std::move(pts), order);
  };

  auto enumerate = [&](auto&& self, int order, int target) -> void {
    if (order == target) {
      backtrace(order);
      return;
    }
    for (std::uint32_t pid = 0; pid < planes.size(); ++pid) {
      if (!seq.empty() && seq.back() == pid) continue;
      const Vec3& src = seq.empty() ? tx.position : images.back();
      if (std::abs(planes[pid].normal.dot(src) - planes[pid].d) < 1e-9) continue;
      seq.push_back(pid);
      images.push_back(detail::mirror_point(src, planes[pid]));
      self(self, order + 1, target);
      seq.pop_back();
      images.pop_back();
    }
  };

  for (int order = 1; order <= max_order; ++order) enumerate(enumerate, 0, order);

  // canonical order + geometric dedup
  std::sort(paths.begin(), paths.end(), [](const PropagationPath& a, const PropagationPath& b) {
    if (a.bounces != b.bounces) return a.bounces < b.bounces;
    if (a.length_m != b.length_m) return a.length_m < b.length_m;
    for (std::size_t i = 0; i < std::min(a.vertices.size(), b.vertices.size()); ++i) {
      const Vec3& u = a.vertices[i];
      const Vec3& v = b.vertices[i];
      if (u.x != v.x) return u.x < v.x;
      if (u.y != v.y) return u.y < v.y;
      if (u.z != v.z) return u.z < v.z;
    }
    return false;
  });
  auto same_path = [](const PropagationPath& a, const PropagationPath& b) {
    if (a.bounces != b.bounces || a.vertices.size() != b.vertices.size()) return false;
    for (std::size_t i = 0; i < a.vertices.size(); ++i)
      if ((a.vertices[i] - b.vertices[i]).norm() > 1e-7) return false;
    return true;
  };
  paths.erase(std::unique(paths.begin(), paths.end(), same_path), paths.end());
  return paths;
}

inline nlohmann::ordered_json path_to_json(const PropagationPath& path) {
  nlohmann::ordered_json j;
  auto verts = nlohmann::ordered_json::array();
  for (const auto& v : path.vertices) verts.push_back({v.x, v.y, v.z});
  j["vertices"] = std::move(verts);
  j["length_m"] = path.length_m;
  j["bounces"] = path.bounces;
  j["penetrations"] = path.penetrations;
  j["power_dbm"] = path.power_dbm;
  return j;
}

}  // namespace ndt
