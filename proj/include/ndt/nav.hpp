#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <vector>

#include "json.hpp"
#include "ndt/occupancy.hpp"
#include "ndt/radiomap.hpp"

namespace ndt {

// 8-connected planning grid; a 2D slice of the occupancy grid at robot
// height, with obstacles inflated by a configurable number of cells.
struct NavGrid {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double resolution = 0.1;
  int nx = 0;
  int ny = 0;
  std::vector<std::uint8_t> free;  // 1 = traversable

  std::size_t index(int ix, int iy) const {
    return static_cast<std::size_t>(iy) * nx + ix;
  }
  bool in_bounds(int ix, int iy) const {
    return ix >= 0 && ix < nx && iy >= 0 && iy < ny;
  }
  bool is_free(int ix, int iy) const { return in_bounds(ix, iy) && free[index(ix, iy)]; }

  std::pair<double, double> cell_center(int ix, int iy) const {
    return {origin_x + (ix + 0.5) * resolution, origin_y + (iy + 0.5) * resolution};
  }
  std::pair<int, int> cell_of(double x, double y) const {
    return {static_cast<int>(std::floor((x - origin_x) / resolution)),
            static_cast<int>(std::floor((y - origin_y) / resolution))};
  }
};

// Unknown voxels are treated as traversable; occupied voxels and their
// inflated ring are not.
inline NavGrid make_nav_grid(const OccupancyGrid& grid, double robot_height_m,
                             int inflation_cells = 1) {
  const GridSpec& spec = grid.spec();
  NavGrid nav;
  nav.origin_x = spec.origin.x;
  nav.origin_y = spec.origin.y;
  nav.resolution = spec.voxel_size;
  nav.nx = spec.nx;
  nav.ny = spec.ny;
  nav.free.assign(static_cast<std::size_t>(spec.nx) * spec.ny, 1);

  int iz = static_cast<int>(std::floor((robot_height_m - spec.origin.z) / spec.voxel_size));
  iz = std::clamp(iz, 0, spec.nz - 1);

  std::vector<std::uint8_t> occupied(nav.free.size(), 0);
  for (int iy = 0; iy < spec.ny; ++iy)
    for (int ix = 0; ix < spec.nx; ++ix)
      if (grid.occupied({ix, iy, iz})) occupied[nav.index(ix, iy)] = 1;

  for (int iy = 0; iy < spec.ny; ++iy)
    for (int ix = 0; ix < spec.nx; ++ix) {
      bool blocked = false;
      for (int dy = -inflation_cells; dy <= inflation_cells && !blocked; ++dy)
        for (int dx = -inflation_cells; dx <= inflation_cells && !blocked; ++dx) {
          const int jx = ix + dx;
          const int jy = iy + dy;
          if (nav.in_bounds(jx, jy) && occupied[nav.index(jx, jy)]) blocked = true;
        }
      if (blocked) nav.free[nav.index(ix, iy)] = 0;
    }
  return nav;
}

struct PlannedPath {
  std::vector<std::pair<double, double>> waypoints;  // meters, cell centers
  double length_m = 0.0;
  double min_power_dbm = std::numeric_limits<double>::quiet_NaN();
  double mean_power_dbm = std::numeric_limits<double>::quiet_NaN();
  int straight_steps = 0;
  int diagonal_steps = 0;
};

namespace detail {

// Exact cost a + b*sqrt(2) for unit-step 8-connected paths. Comparisons are
// integer-exact; ties happen only on equal (a, b).
struct StepCost {
  std::int64_t straight = 0;
  std::int64_t diagonal = 0;

  StepCost operator+(const StepCost& o) const {
    return {straight + o.straight, diagonal + o.diagonal};
  }
  bool operator==(const StepCost&) const = default;

  // a1 + b1*sqrt(2) < a2 + b2*sqrt(2)
  bool less(const StepCost& o) const {
    const std::int64_t a = straight - o.straight;   // compare a < -b*sqrt(2) form
    const std::int64_t b = o.diagonal - diagonal;   // a < b*sqrt(2)?
    if (a < 0 && b >= 0) return !(a == 0 && b == 0);
    if (a >= 0 && b <= 0) return false;
    if (a >= 0 && b > 0) return a * a < 2 * b * b;
    return a * a > 2 * b * b;  // a < 0, b < 0
  }

  double to_meters(double resolution) const {
    return resolution * (static_cast<double>(straight) +
                         static_cast<double>(diagonal) * std::sqrt(2.0));
  }
};

inline StepCost octile(int ix, int iy, int jx, int jy) {
  const std::int64_t dx = std::abs(ix - jx);
  const std::int64_t dy = std::abs(iy - jy);
  return {std::max(dx, dy) - std::min(dx, dy), std::min(dx, dy)};
}

constexpr int kDx[8] = {1, -1, 0, 0, 1, 1, -1, -1};
constexpr int kDy[8] = {0, 0, 1, -1, 1, -1, 1, -1};

inline std::vector<std::size_t> reconstruct(const std::vector<std::int32_t>& parent,
                                            std::size_t goal) {
  std::vector<std::size_t> cells;
  for (std::int64_t i = static_cast<std::int64_t>(goal); i >= 0; i = parent[i])
    cells.push_back(static_cast<std::size_t>(i));
  std::reverse(cells.begin(), cells.end());
  return cells;
}

inline PlannedPath path_from_cells(const NavGrid& grid, const std::vector<std::size_t>& cells) {
  PlannedPath path;
  int prev_x = 0;
  int prev_y = 0;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const int ix = static_cast<int>(cells[k] % grid.nx);
    const int iy = static_cast<int>(cells[k] / grid.nx);
    path.waypoints.push_back(grid.cell_center(ix, iy));
    if (k > 0) {
      if (std::abs(ix - prev_x) + std::abs(iy - prev_y) == 2)
        ++path.diagonal_steps;
      else
        ++path.straight_steps;
    }
    prev_x = ix;
    prev_y = iy;
  }
  path.length_m =
      StepCost{path.straight_steps, path.diagonal_steps}.to_meters(grid.resolution);
  return path;
}

inline std::pair<std::size_t, std::size_t> endpoints_or_throw(const NavGrid& grid,
                                                              double sx, double sy,
                                                              double gx, double gy) {
  const auto [six, siy] = grid.cell_of(sx, sy);
  const auto [gix, giy] = grid.cell_of(gx, gy);
  if (!grid.is_free(six, siy) || !grid.is_free(gix, giy))
    throw Error(ErrorCode::blocked_endpoint, "start or goal cell is not free");
  return {grid.index(six, siy), grid.index(gix, giy)};
}

}  // namespace detail

// Optimal 8-connected shortest path (A*, octile heuristic, exact step-cost
// arithmetic). Equal-f ties expand the lowest cell index first.
inline PlannedPath plan_shortest(const NavGrid& grid, double start_x, double start_y,
                                 double goal_x, double goal_y) {
  using detail::StepCost;
  const auto [start, goal] = detail::endpoints_or_throw(grid, start_x, start_y, goal_x, goal_y);
  const int goal_ix = static_cast<int>(goal % grid.nx);
  const int goal_iy = static_cast<int>(goal / grid.nx);

  const std::size_t n = grid.free.size();
  std::vector<StepCost> g(n, StepCost{std::numeric_limits<std::int64_t>::max() / 4, 0});
  std::vector<std::int32_t> parent(n, -1);
  std::vector<std::uint8_t> closed(n, 0);

  struct QueueEntry {
    StepCost f;
    std::size_t cell;
  };
  auto worse = [](const QueueEntry& a, const QueueEntry& b) {
    if (a.f == b.f) return a.cell > b.cell;
    return b.f.less(a.f);
  };
  std::priority_queue<QueueEntry, std::vector<QueueEntry>, decltype(worse)> open(worse);

  g[start] = {0, 0};
  open.push({detail::octile(static_cast<int>(start % grid.nx),
                            static_cast<int>(start / grid.nx), goal_ix, goal_iy),
             start});

  while (!open.empty()) {
    const auto [f, cell] = open.top();
    open.pop();
    if (closed[cell]) continue;
    closed[cell] = 1;
    if (cell == goal) return detail::path_from_cells(grid, detail::reconstruct(parent, goal));

    const int ix = static_cast<int>(cell % grid.nx);
    const int iy = static_cast<int>(cell / grid.nx);
    for (int k = 0; k < 8; ++k) {
      const int jx = ix + detail::kDx[k];
      const int jy = iy + detail::kDy[k];
      if (!grid.is_free(jx, jy)) continue;
      const std::size_t next = grid.index(jx, jy);
      if (closed[next]) continue;
      const StepCost step{k < 4 ? 1 : 0, k < 4 ? 0 : 1};
      const StepCost cand = g[cell] + step;
      if (cand.less(g[next])) {
        g[next] = cand;
        parent[next] = static_cast<std::int32_t>(cell);
        open.push({cand + detail::octile(jx, jy, goal_ix, goal_iy), next});
      }
    }
  }
  throw Error(ErrorCode::unreachable, "no path between start and goal");
}

// Exact-arithmetic Dijkstra over the same step costs; reference oracle for
// the A* planner.
inline detail::StepCost dijkstra_cost(const NavGrid& grid, double start_x, double start_y,
                                      double goal_x, double goal_y) {
  using detail::StepCost;
  const auto [start, goal] = detail::endpoints_or_throw(grid, start_x, start_y, goal_x, goal_y);
  const std::size_t n = grid.free.size();
  std::vector<StepCost> g(n, StepCost{std::numeric_limits<std::int64_t>::max() / 4, 0});
  std::vector<std::uint8_t> done(n, 0);

  struct QueueEntry {
    StepCost d;
    std::size_t cell;
  };
  auto worse = [](const QueueEntry& a, const QueueEntry& b) {
    if (a.d == b.d) return a.cell > b.cell;
    return b.d.less(a.d);
  };
  std::priority_queue<QueueEntry, std::vector<QueueEntry>, decltype(worse)> open(worse);
  g[start] = {0, 0};
  open.push({{0, 0}, start});
  while (!open.empty()) {
    const auto [d, cell] = open.top();
    open.pop();
    if (done[cell]) continue;
    done[cell] = 1;
    if (cell == goal) return d;
    const int ix = static_cast<int>(cell % grid.nx);
    const int iy = static_cast<int>(cell / grid.nx);
    for (int k = 0; k < 8; ++k) {
      const int jx = ix + detail::kDx[k];
      const int jy = iy + detail::kDy[k];
      if (!grid.is_free(jx, jy)) continue;
      const std::size_t next = grid.index(jx, jy);
      if (done[next]) continue;
      const StepCost cand = g[cell] + StepCost{k < 4 ? 1 : 0, k < 4 ? 0 : 1};
      if (cand.less(g[next])) {
        g[next] = cand;
        open.push({cand, next});
      }
    }
  }
  throw Error(ErrorCode::unreachable, "no path between start and goal");
}

// Radio penalty in [0, 1]: 0 at p_max and above, 1 at p_min and below.
inline double radio_penalty(double power_dbm, double p_min_dbm, double p_max_dbm) {
  return std::clamp((p_max_dbm - power_dbm) / (p_max_dbm - p_min_dbm), 0.0, 1.0);
}

// Resampled power stats along the path (same arc-length step as signal_cdf).
inline void annotate_power(PlannedPath& path, const RadioMap& map, double step = 0.25) {
  if (path.waypoints.empty()) return;
  const auto cdf = signal_cdf(map, path.waypoints, step);
  path.min_power_dbm = cdf.front().first;
  double linear = 0.0;
  double prev_prob = 0.0;
  double count = 0.0;
  for (const auto& [dbm, prob] : cdf) {
    const double weight = prob - prev_prob;
    linear += weight * dbm_to_mw(dbm);
    prev_prob = prob;
    count += weight;
  }
  path.mean_power_dbm = mw_to_dbm(linear / count);
}

// Blended objective: step_length * (alpha + (1-alpha) * penalty(entered
// cell)). alpha = 1 is delegated to plan_shortest so the reduction is exact.
inline PlannedPath plan_radio_aware(const NavGrid& grid, const RadioMap& map,
                                    double start_x, double start_y, double goal_x,
                                    double goal_y, double alpha = 0.5,
                                    double p_min_dbm = -100.0, double p_max_dbm = -40.0) {
  if (alpha < 0.0 || alpha > 1.0)
    throw Error(ErrorCode::invariant_violation, "alpha must be in [0, 1]");
  if (!(p_min_dbm < p_max_dbm))
    throw Error(ErrorCode::invariant_violation, "power window needs p_min < p_max");
  if (alpha == 1.0) {
    PlannedPath path = plan_shortest(grid, start_x, start_y, goal_x, goal_y);
    annotate_power(path, map);
    return path;
  }

  const auto [start, goal] = detail::endpoints_or_throw(grid, start_x, start_y, goal_x, goal_y);
  const int goal_ix = static_cast<int>(goal % grid.nx);
  const int goal_iy = static_cast<int>(goal / grid.nx);
  const std::size_t n = grid.free.size();

  // per-cell penalty at cell centers; out-of-map cells take the worst value
  std::vector<double> penalty(n, 1.0);
  for (int iy = 0; iy < grid.ny; ++iy)
    for (int ix = 0; ix < grid.nx; ++ix) {
      const auto [cx, cy] = grid.cell_center(ix, iy);
      if (!map.spec.contains(cx, cy)) continue;
      penalty[grid.index(ix, iy)] =
          radio_penalty(interpolate(map, cx, cy), p_min_dbm, p_max_dbm);
    }

  const double res = grid.resolution;
  const double diag = res * std::sqrt(2.0);
  // shrink keeps the heuristic admissible under fp accumulation error
  const double h_scale = alpha * res * (1.0 - 1e-9);
  auto heuristic = [&](int ix, int iy) {
    const double dx = ix - goal_ix;
    const double dy = iy - goal_iy;
    return h_scale * std::sqrt(dx * dx + dy * dy);
  };

  std::vector<double> g(n, std::numeric_limits<double>::infinity());
  std::vector<std::int32_t> parent(n, -1);

  struct QueueEntry {
    double f;
    std::size_t cell;
  };
  auto worse = [](const QueueEntry& a, const QueueEntry& b) {
    if (a.f == b.f) return a.cell > b.cell;
    return a.f > b.f;
  };
  std::priority_queue<QueueEntry, std::vector<QueueEntry>, decltype(worse)> open(worse);

  g[start] = 0.0;
  open.push({heuristic(static_cast<int>(start % grid.nx), static_cast<int>(start / grid.nx)),
             start});

  while (!open.empty()) {
    const auto [f, cell] = open.top();
    open.pop();
    const int ix = static_cast<int>(cell % grid.nx);
    const int iy = static_cast<int>(cell / grid.nx);
    if (f > g[cell] + heuristic(ix, iy)) continue;  // stale entry
    if (cell == goal) break;

    for (int k = 0; k < 8; ++k) {
      const int jx = ix + detail::kDx[k];
      const int jy = iy + detail::kDy[k];
      if (!grid.is_free(jx, jy)) continue;
      const std::size_t next = grid.index(jx, jy);
      const double len = k < 4 ? res : diag;
      const double w = len * (alpha + (1.0 - alpha) * penalty[next]);
      const double cand = g[cell] + w;
      if (cand < g[next]) {
        g[next] = cand;
        parent[next] = static_cast<std::int32_t>(cell);
        open.push({cand + heuristic(jx, jy), next});
      }
    }
  }
  if (!std::isfinite(g[goal]))
    throw Error(ErrorCode::unreachable, "no path between start and goal");

  PlannedPath path = detail::path_from_cells(grid, detail::reconstruct(parent, goal));
  annotate_power(path, map);
  return path;
}

// Canonical objective value of a planned path (used by tests and the oracle).
inline double radio_cost(const NavGrid& grid, const RadioMap& map, const PlannedPath& path,
                         double alpha, double p_min_dbm, double p_max_dbm) {
  double cost = 0.0;
  for (std::size_t i = 1; i < path.waypoints.size(); ++i) {
    const auto [ax, ay] = path.waypoints[i - 1];
    const auto [bx, by] = path.waypoints[i];
    const auto [aix, aiy] = grid.cell_of(ax, ay);
    const auto [bix, biy] = grid.cell_of(bx, by);
    const double len =
        (std::abs(aix - bix) + std::abs(aiy - biy) == 2) ? grid.resolution * std::sqrt(2.0)
                                                         : grid.resolution;
    double pen = 1.0;
    if (map.spec.contains(bx, by))
      pen = radio_penalty(interpolate(map, bx, by), p_min_dbm, p_max_dbm);
    cost += len * (alpha + (1.0 - alpha) * pen);
  }
  return cost;
}

inline std::string path_to_csv(const PlannedPath& path) {
  std::string out = "x,y\n";
  for (const auto& [x, y] : path.waypoints)
    out += format_f64(x) + "," + format_f64(y) + "\n";
  return out;
}

inline nlohmann::ordered_json path_summary_json(const PlannedPath& path) {
  nlohmann::ordered_json j;
  j["waypoints"] = path.waypoints.size();
  j["length_m"] = path.length_m;
  j["min_power_dbm"] = path.min_power_dbm;
  j["mean_power_dbm"] = path.mean_power_dbm;
  return j;
}

}  // namespace ndt
