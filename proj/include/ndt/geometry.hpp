#pragma once

#include <array>
#include <cmath>
#include <limits>

#include "ndt/error.hpp"

namespace ndt {

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  constexpr bool operator==(const Vec3&) const = default;

  constexpr double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  constexpr Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const { return *this / norm(); }

  constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
  }
};

inline constexpr Vec3 operator*(double s, const Vec3& v) { return v * s; }

inline Vec3 min(const Vec3& a, const Vec3& b) {
  return {std::min(a.x, b.x), std::min(a.y, b.y), std::min(a.z, b.z)};
}
inline Vec3 max(const Vec3& a, const Vec3& b) {
  return {std::max(a.x, b.x), std::max(a.y, b.y), std::max(a.z, b.z)};
}

// Unit quaternion, (w, x, y, z) order.
struct Quat {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr bool operator==(const Quat&) const = default;

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

  Vec3 rotate(const Vec3& v) const {
    // q v q*, expanded
    const Vec3 u{x, y, z};
    const Vec3 t = 2.0 * u.cross(v);
    return v + w * t + u.cross(t);
  }
};

struct Pose {
  Vec3 translation;
  Quat rotation;

  constexpr bool operator==(const Pose&) const = default;

  // Quaternion must be unit within 1e-6.
  bool valid() const {
    return translation.finite() && std::abs(rotation.norm() - 1.0) <= 1e-6;
  }

  Vec3 apply(const Vec3& p) const { return rotation.rotate(p) + translation; }
};

struct Aabb {
  Vec3 lo{std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity()};
  Vec3 hi{-std::numeric_limits<double>::infinity(),
          -std::numeric_limits<double>::infinity(),
          -std::numeric_limits<double>::infinity()};

  void expand(const Vec3& p) {
    lo = min(lo, p);
    hi = max(hi, p);
  }
  void expand(const Aabb& b) {
    lo = min(lo, b.lo);
    hi = max(hi, b.hi);
  }
  bool empty() const { return lo.x > hi.x; }
  Vec3 extent() const { return hi - lo; }
  Vec3 center() const { return (lo + hi) * 0.5; }

  // Slab test against segment param range [t0, t1]; updates the range in place.
  bool clip(const Vec3& origin, const Vec3& dir, double& t0, double& t1) const {
    for (int a = 0; a < 3; ++a) {
      const double o = origin[a];
      const double d = dir[a];
      const double bmin = lo[a];
      const double bmax = hi[a];
      if (d == 0.0) {
        if (o < bmin || o > bmax) return false;
      } else {
        double u = (bmin - o) / d;
        double v = (bmax - o) / d;
        if (u > v) std::swap(u, v);
        t0 = std::max(t0, u);
        t1 = std::min(t1, v);
        if (t0 > t1) return false;
      }
    }
    return true;
  }
};

}  // namespace ndt
