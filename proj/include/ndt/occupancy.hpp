#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "json.hpp"
#include "ndt/frame.hpp"
#include "ndt/geometry.hpp"
#include "ndt/io.hpp"
#include "ndt/mesh.hpp"

namespace ndt {

inline double logit(double p) { return std::log(p / (1.0 - p)); }
inline double sigmoid(double l) { return 1.0 / (1.0 + std::exp(-l)); }

struct Cell {
  int x = 0;
  int y = 0;
  int z = 0;

  bool operator==(const Cell&) const = default;
};

struct GridSpec {
  Vec3 origin;
  double voxel_size = 0.1;
  int nx = 1;
  int ny = 1;
  int nz = 1;

  bool operator==(const GridSpec&) const = default;

  void validate() const {
    if (!(voxel_size > 0.0))
      throw Error(ErrorCode::invariant_violation, "voxel_size must be > 0");
    if (nx < 1 || ny < 1 || nz < 1)
      throw Error(ErrorCode::invariant_violation, "grid dims must be >= 1");
    if (!origin.finite())
      throw Error(ErrorCode::invariant_violation, "grid origin must be finite");
  }

  std::size_t size() const {
    return static_cast<std::size_t>(nx) * ny * nz;
  }

  bool in_bounds(const Cell& c) const {
    return c.x >= 0 && c.x < nx && c.y >= 0 && c.y < ny && c.z >= 0 && c.z < nz;
  }

  // x fastest, then y, then z
  std::size_t index(const Cell& c) const {
    return (static_cast<std::size_t>(c.z) * ny + c.y) * nx + c.x;
  }

  Cell cell_of(const Vec3& p) const {
    return {static_cast<int>(std::floor((p.x - origin.x) / voxel_size)),
            static_cast<int>(std::floor((p.y - origin.y) / voxel_size)),
            static_cast<int>(std::floor((p.z - origin.z) / voxel_size))};
  }

  Vec3 cell_min(const Cell& c) const {
    return {origin.x + c.x * voxel_size, origin.y + c.y * voxel_size,
            origin.z + c.z * voxel_size};
  }

  Vec3 cell_center(const Cell& c) const {
    return cell_min(c) + Vec3{0.5, 0.5, 0.5} * voxel_size;
  }

  Aabb bounds() const {
    Aabb b;
    b.expand(origin);
    b.expand(origin + Vec3{nx * voxel_size, ny * voxel_size, nz * voxel_size});
    return b;
  }
};

struct OccupancyParams {
  double l_hit = logit(0.7);
  double l_miss = logit(0.4);
  double l_min = logit(0.12);
  double l_max = logit(0.97);
  double occ_threshold = 0.5;

  bool operator==(const OccupancyParams&) const = default;
};

// Dense log-odds voxel grid. A voxel is unknown until first touched by a ray
// or by gap filling; unknown voxels report probability exactly 0.5 and never
// count as occupied.
class OccupancyGrid {
 public:
  static constexpr std::uint8_t kObserved = 1;
  static constexpr std::uint8_t kVirtual = 2;

  OccupancyGrid() : OccupancyGrid(GridSpec{}, OccupancyParams{}) {}

  explicit OccupancyGrid(GridSpec spec, OccupancyParams params = {})
      : spec_(spec), params_(params) {
    spec_.validate();
    logodds_.assign(spec_.size(), 0.0f);
    flags_.assign(spec_.size(), 0);
  }

  const GridSpec& spec() const { return spec_; }
  const OccupancyParams& params() const { return params_; }
  const std::vector<float>& logodds() const { return logodds_; }
  const std::vector<std::uint8_t>& flags() const { return flags_; }

  bool operator==(const OccupancyGrid&) const = default;

  float logodds_at(const Cell& c) const { return logodds_[spec_.index(c)]; }
  std::uint8_t flags_at(const Cell& c) const { return flags_[spec_.index(c)]; }

  double probability(const Cell& c) const {
    return sigmoid(logodds_[spec_.index(c)]);
  }

  bool known(const Cell& c) const { return flags_[spec_.index(c)] != 0; }

  bool occupied(const Cell& c) const {
    const std::size_t i = spec_.index(c);
    return flags_[i] != 0 && sigmoid(logodds_[i]) >= params_.occ_threshold;
  }

  std::size_t occupied_count() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < logodds_.size(); ++i)
      if (flags_[i] != 0 && sigmoid(logodds_[i]) >= params_.occ_threshold) ++n;
    return n;
  }

  void add_hit(const Cell& c) { bump(spec_.index(c), params_.l_hit); }
  void add_miss(const Cell& c) { bump(spec_.index(c), params_.l_miss); }

  void set_virtual_occupied(const Cell& c) {
    const std::size_t i = spec_.index(c);
    logodds_[i] = static_cast<float>(params_.l_max);
    flags_[i] |= kVirtual;
  }

  // Test support: force a voxel to a fully observed occupied/free state.
  void set_observed(const Cell& c, bool occ) {
    const std::size_t i = spec_.index(c);
    logodds_[i] = static_cast<float>(occ ? params_.l_max : params_.l_min);
    flags_[i] |= kObserved;
  }

  // Raw access for snapshot loading; sizes must match spec().size().
  std::vector<float>& raw_logodds() { return logodds_; }
  std::vector<std::uint8_t>& raw_flags() { return flags_; }

 private:
  void bump(std::size_t i, double delta) {
    const double next = std::clamp(static_cast<double>(logodds_[i]) + delta,
                                   params_.l_min, params_.l_max);
    logodds_[i] = static_cast<float>(next);
    flags_[i] |= kObserved;
  }

  GridSpec spec_;
  OccupancyParams params_;
  std::vector<float> logodds_;
  std::vector<std::uint8_t> flags_;
};

// Visits every cell the segment [a, b] passes through, in order (3D DDA).
// Both endpoints' cells are included when inside the grid.
template <typename Fn>
void walk_segment_cells(const GridSpec& spec, const Vec3& a, const Vec3& b, Fn&& fn) {
  const Vec3 d = b - a;
  double t0 = 0.0;
  double t1 = 1.0;
  if (!spec.bounds().clip(a, d, t0, t1)) return;

  // Nudge inside so that the entry cell is computed on the grid side of the
  // boundary.
  const double eps = 1e-12;
  const double tin = std::min(t0 + eps, 1.0);
  Cell cur = spec.cell_of(a + d * tin);
  cur.x = std::clamp(cur.x, 0, spec.nx - 1);
  cur.y = std::clamp(cur.y, 0, spec.ny - 1);
  cur.z = std::clamp(cur.z, 0, spec.nz - 1);

  const int step_x = d.x > 0 ? 1 : (d.x < 0 ? -1 : 0);
  const int step_y = d.y > 0 ? 1 : (d.y < 0 ? -1 : 0);
  const int step_z = d.z > 0 ? 1 : (d.z < 0 ? -1 : 0);

  const double inf = std::numeric_limits<double>::infinity();
  auto boundary_t = [&](int axis, int cell_idx, int step) {
    if (step == 0) return inf;
    const double edge = spec.origin[axis] + (cell_idx + (step > 0 ? 1 : 0)) * spec.voxel_size;
    const double da = axis == 0 ? d.x : (axis == 1 ? d.y : d.z);
    const double oa = axis == 0 ? a.x : (axis == 1 ? a.y : a.z);
    return (edge - oa) / da;
  };

  double tmax_x = boundary_t(0, cur.x, step_x);
  double tmax_y = boundary_t(1, cur.y, step_y);
  double tmax_z = boundary_t(2, cur.z, step_z);
  const double tdelta_x = step_x ? spec.voxel_size / std::abs(d.x) : inf;
  const double tdelta_y = step_y ? spec.voxel_size / std::abs(d.y) : inf;
  const double tdelta_z = step_z ? spec.voxel_size / std::abs(d.z) : inf;

  while (true) {
    fn(cur);
    double tnext;
    if (tmax_x <= tmax_y && tmax_x <= tmax_z) {
      tnext = tmax_x;
      if (tnext > t1) break;
      cur.x += step_x;
      tmax_x += tdelta_x;
    } else if (tmax_y <= tmax_z) {
      tnext = tmax_y;
      if (tnext > t1) break;
      cur.y += step_y;
      tmax_y += tdelta_y;
    } else {
      tnext = tmax_z;
      if (tnext > t1) break;
      cur.z += step_z;
      tmax_z += tdelta_z;
    }
    if (!spec.in_bounds(cur)) break;
  }
}

struct IntegrateResult {
  std::size_t integrated_points = 0;
  std::size_t ignored_points = 0;
};

// Per point: +l_hit on the endpoint voxel, +l_miss on every voxel strictly
// between the sensor and the endpoint. Points whose endpoint falls outside
// the grid are skipped and counted.
inline IntegrateResult integrate_frame(OccupancyGrid& grid, const PointFrame& frame) {
  frame.validate();
  if (!frame.header.pose.valid())
    throw Error(ErrorCode::spec_mismatch, "frame pose cannot be applied");
  const GridSpec& spec = grid.spec();
  const Vec3 sensor = frame.header.pose.translation;
  if (!sensor.finite())
    throw Error(ErrorCode::spec_mismatch, "sensor position not finite");
  const Cell sensor_cell = spec.cell_of(sensor);

  IntegrateResult result;
  for (const auto& p : frame.points) {
    const Vec3 world = frame.header.pose.apply({p.x, p.y, p.z});
    const Cell end = spec.cell_of(world);
    if (!spec.in_bounds(end)) {
      ++result.ignored_points;
      continue;
    }
    walk_segment_cells(spec, sensor, world, [&](const Cell& c) {
      if (c == end || c == sensor_cell) return;
      grid.add_miss(c);
    });
    grid.add_hit(end);
    ++result.integrated_points;
  }
  return result;
}

// Bridging rule: an unknown voxel becomes virtually occupied iff, along some
// axis, an occupied voxel lies within `radius` steps on both sides. Decisions
// are taken against the pre-pass state; observed voxels are never modified.
inline std::size_t fill_gaps(OccupancyGrid& grid, int radius) {
  if (radius < 1) throw Error(ErrorCode::invariant_violation, "fill radius must be >= 1");
  const GridSpec& spec = grid.spec();
  const OccupancyGrid before = grid;

  auto occupied_before = [&](Cell c) {
    return spec.in_bounds(c) && before.occupied(c);
  };

  std::size_t filled = 0;
  for (int z = 0; z < spec.nz; ++z)
    for (int y = 0; y < spec.ny; ++y)
      for (int x = 0; x < spec.nx; ++x) {
        const Cell c{x, y, z};
        if (before.known(c)) continue;
        bool bridged = false;
        for (int axis = 0; axis < 3 && !bridged; ++axis) {
          bool neg = false;
          bool pos = false;
          for (int k = 1; k <= radius; ++k) {
            Cell cn = c;
            Cell cp = c;
            (axis == 0 ? cn.x : axis == 1 ? cn.y : cn.z) -= k;
            (axis == 0 ? cp.x : axis == 1 ? cp.y : cp.z) += k;
            neg = neg || occupied_before(cn);
            pos = pos || occupied_before(cp);
          }
          bridged = neg && pos;
        }
        if (bridged) {
          grid.set_virtual_occupied(c);
          ++filled;
        }
      }
  return filled;
}

// Two triangles per exposed face (occupied voxel against non-occupied or
// out-of-grid neighbor), outward normals.
inline TriangleMesh extract_mesh(const OccupancyGrid& grid) {
  const GridSpec& spec = grid.spec();
  TriangleMesh mesh;

  // (axis, sign) -> corner offsets in winding order for an outward +/-axis normal
  static constexpr int kFaceCorners[2][4][2] = {
      {{0, 0}, {1, 0}, {1, 1}, {0, 1}},  // positive face
      {{0, 0}, {0, 1}, {1, 1}, {1, 0}},  // negative face
  };

  auto emit_face = [&](const Cell& c, int axis, int sign) {
    const Vec3 lo = spec.cell_min(c);
    const int u = (axis + 1) % 3;
    const int v = (axis + 2) % 3;
    double corner[3];
    corner[axis] = (axis == 0 ? lo.x : axis == 1 ? lo.y : lo.z) +
                   (sign > 0 ? spec.voxel_size : 0.0);
    const auto& order = kFaceCorners[sign > 0 ? 0 : 1];
    std::uint32_t base = static_cast<std::uint32_t>(mesh.vertices.size());
    for (int k = 0; k < 4; ++k) {
      corner[u] = (u == 0 ? lo.x : u == 1 ? lo.y : lo.z) + order[k][0] * spec.voxel_size;
      corner[v] = (v == 0 ? lo.x : v == 1 ? lo.y : lo.z) + order[k][1] * spec.voxel_size;
      mesh.vertices.push_back(Vec3f::from_vec3({corner[0], corner[1], corner[2]}));
    }
    Vec3f normal{0, 0, 0};
    (axis == 0 ? normal.x : axis == 1 ? normal.y : normal.z) = static_cast<float>(sign);
    mesh.triangles.push_back({base, base + 1, base + 2});
    mesh.normals.push_back(normal);
    mesh.triangles.push_back({base, base + 2, base + 3});
    mesh.normals.push_back(normal);
  };

  for (int z = 0; z < spec.nz; ++z)
    for (int y = 0; y < spec.ny; ++y)
      for (int x = 0; x < spec.nx; ++x) {
        const Cell c{x, y, z};
        if (!grid.occupied(c)) continue;
        for (int axis = 0; axis < 3; ++axis)
          for (int sign = -1; sign <= 1; sign += 2) {
            Cell n = c;
            (axis == 0 ? n.x : axis == 1 ? n.y : n.z) += sign;
            if (spec.in_bounds(n) && grid.occupied(n)) continue;
            emit_face(c, axis, sign);
          }
      }
  return mesh;
}

// ---------------------------------------------------------------------------
// Snapshot file: one JSON spec line, '\n', then the float32 LE log-odds array
// followed by one flags byte per voxel (x fastest, then y, then z).
// ---------------------------------------------------------------------------

inline Bytes write_grid(const OccupancyGrid& grid) {
  nlohmann::ordered_json j;
  const GridSpec& s = grid.spec();
  const OccupancyParams& p = grid.params();
  j["voxel_size"] = s.voxel_size;
  j["origin"] = {s.origin.x, s.origin.y, s.origin.z};
  j["dims"] = {s.nx, s.ny, s.nz};
  j["l_hit"] = p.l_hit;
  j["l_miss"] = p.l_miss;
  j["l_min"] = p.l_min;
  j["l_max"] = p.l_max;
  j["occ_threshold"] = p.occ_threshold;
  const std::string header = j.dump();
  Bytes out(header.begin(), header.end());
  out.push_back('\n');
  out.reserve(out.size() + grid.logodds().size() * 5);
  for (float v : grid.logodds()) put_f32le(out, v);
  out.insert(out.end(), grid.flags().begin(), grid.flags().end());
  return out;
}

inline OccupancyGrid read_grid(const Bytes& bytes) {
  const auto nl = std::find(bytes.begin(), bytes.end(), std::uint8_t('\n'));
  if (nl == bytes.end()) throw Error(ErrorCode::malformed_header, "missing grid header line");
  nlohmann::ordered_json j =
      nlohmann::ordered_json::parse(std::string(bytes.begin(), nl), nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw Error(ErrorCode::malformed_header, "grid header is not a JSON object");

  GridSpec spec;
  OccupancyParams params;
  try {
    spec.voxel_size = j.at("voxel_size").get<double>();
    const auto& o = j.at("origin");
    const auto& d = j.at("dims");
    spec.origin = {o.at(0).get<double>(), o.at(1).get<double>(), o.at(2).get<double>()};
    spec.nx = d.at(0).get<int>();
    spec.ny = d.at(1).get<int>();
    spec.nz = d.at(2).get<int>();
    params.l_hit = j.at("l_hit").get<double>();
    params.l_miss = j.at("l_miss").get<double>();
    params.l_min = j.at("l_min").get<double>();
    params.l_max = j.at("l_max").get<double>();
    params.occ_threshold = j.at("occ_threshold").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::malformed_header, e.what());
  }

  OccupancyGrid grid(spec, params);
  const std::size_t n = spec.size();
  const std::size_t need = n * 4 + n;
  const std::size_t have = static_cast<std::size_t>(bytes.end() - (nl + 1));
  if (have < need)
    throw Error(ErrorCode::truncated_payload, "grid payload has " + std::to_string(have) +
                                                  " bytes, need " + std::to_string(need));
  const std::uint8_t* p = &*(nl + 1);
  std::vector<float> logodds(n);
  for (std::size_t i = 0; i < n; ++i, p += 4) logodds[i] = get_f32le(p);
  std::vector<std::uint8_t> flags(p, p + n);

  OccupancyGrid out(spec, params);
  out.raw_logodds() = std::move(logodds);
  out.raw_flags() = std::move(flags);
  return out;
}

}  // namespace ndt
