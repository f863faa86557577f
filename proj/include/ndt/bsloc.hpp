#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "ndt/geometry.hpp"
#include "ndt/io.hpp"

namespace ndt {

// 5G NR timing constants. The propagation speed is the one the granularity
// tables are computed with (c rounded to 3e8), so per-step distances come out
// at 78.125 / 2^mu meters exactly.
struct TAConfig {
  int mu = 4;
  double delta_f_max_hz = 480e3;
  int n_f = 4096;
  int n_max = 3486;
  double c = 3.0e8;

  double t_c() const { return 1.0 / (delta_f_max_hz * n_f); }

  void validate() const {
    if (mu < 0 || mu > 4)
      throw Error(ErrorCode::unsupported_numerology, "mu must be in 0..4");
  }
};

struct TAObservation {
  Vec3 robot_position;
  int n = 0;
  TAConfig config;

  void validate() const {
    config.validate();
    if (n < 0 || n > config.n_max)
      throw Error(ErrorCode::out_of_range, "TA index outside 0..n_max");
  }
};

struct BSEstimate {
  Vec3 position;
  double residual_m = 0.0;  // RMS of range residuals
  int iterations = 0;
};

// One-way distance per TA step. N_TA spans 16*64*2^-mu slot units of T_c;
// halving is exact for mu = 0..4.
inline double ta_granularity(int mu, const TAConfig& config = {}) {
  if (mu < 0 || mu > 4)
    throw Error(ErrorCode::unsupported_numerology, "mu must be in 0..4");
  const double slots = 16.0 * 64.0 * std::pow(2.0, -mu);
  return slots * config.t_c() * config.c / 2.0;
}

// Ties round half-up.
inline int quantize_distance(double distance_m, int mu, const TAConfig& config = {}) {
  if (distance_m < 0.0)
    throw Error(ErrorCode::out_of_range, "distance must be >= 0");
  const double g = ta_granularity(mu, config);
  const double n = std::floor(distance_m / g + 0.5);
  if (n > config.n_max)
    throw Error(ErrorCode::out_of_range,
                "distance quantizes beyond n_max=" + std::to_string(config.n_max));
  return static_cast<int>(n);
}

struct EstimateOptions {
  double known_height_m = 2.0;
  double search_radius_m = 200.0;  // clip on the n_max*g expansion
  int max_iterations = 50;
};

namespace detail {

inline double range_sse(const std::vector<TAObservation>& obs, double x, double y,
                        double z, const std::vector<double>& ranges) {
  double sse = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const Vec3& p = obs[i].robot_position;
    const double dx = p.x - x;
    const double dy = p.y - y;
    const double dz = p.z - z;
    const double r = std::sqrt(dx * dx + dy * dy + dz * dz) - ranges[i];
    sse += r * r;
  }
  return sse;
}

}  // namespace detail

// Least-squares BS position from TA ranges: coarse grid search (cell g/2)
// over the observation bounding box expanded by min(n_max*g, search radius),
// then Gauss-Newton refinement in (x, y) with z fixed.
inline BSEstimate estimate_bs(const std::vector<TAObservation>& observations,
                              const EstimateOptions& options = {}) {
  if (observations.size() < 3)
    throw Error(ErrorCode::insufficient_observations, "need >= 3 observations");
  const int mu = observations.front().config.mu;
  for (const auto& o : observations) {
    o.validate();
    if (o.config.mu != mu)
      throw Error(ErrorCode::spec_mismatch, "observations mix numerologies");
  }

  // collinearity check on the XY projection
  {
    const Vec3& a = observations[0].robot_position;
    double max_cross = 0.0;
    double scale = 0.0;
    for (std::size_t i = 1; i < observations.size(); ++i) {
      const Vec3& b = observations[i].robot_position;
      scale = std::max(scale, std::hypot(b.x - a.x, b.y - a.y));
      for (std::size_t k = i + 1; k < observations.size(); ++k) {
        const Vec3& c = observations[k].robot_position;
        const double cross =
            (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
        max_cross = std::max(max_cross, std::abs(cross));
      }
    }
    if (max_cross <= 1e-9 * std::max(1.0, scale * scale))
      throw Error(ErrorCode::degenerate_geometry, "robot positions are collinear");
  }

  const double g = ta_granularity(mu, observations.front().config);
  std::vector<double> ranges(observations.size());
  for (std::size_t i = 0; i < observations.size(); ++i)
    ranges[i] = observations[i].n * g;

  const double z = options.known_height_m;

  // phase 1: coarse grid
  double xmin = observations[0].robot_position.x;
  double xmax = xmin;
  double ymin = observations[0].robot_position.y;
  double ymax = ymin;
  for (const auto& o : observations) {
    xmin = std::min(xmin, o.robot_position.x);
    xmax = std::max(xmax, o.robot_position.x);
    ymin = std::min(ymin, o.robot_position.y);
    ymax = std::max(ymax, o.robot_position.y);
  }
  const double margin =
      std::min(static_cast<double>(observations.front().config.n_max) * g,
               options.search_radius_m);
  xmin -= margin;
  xmax += margin;
  ymin -= margin;
  ymax += margin;

  const double cell = g / 2.0;
  const int gx = static_cast<int>(std::floor((xmax - xmin) / cell)) + 1;
  const int gy = static_cast<int>(std::floor((ymax - ymin) / cell)) + 1;
  double best_x = xmin;
  double best_y = ymin;
  double best_sse = std::numeric_limits<double>::infinity();
  for (int iy = 0; iy < gy; ++iy) {
    const double y = ymin + iy * cell;
    for (int ix = 0; ix < gx; ++ix) {
      const double x = xmin + ix * cell;
      const double sse = detail::range_sse(observations, x, y, z, ranges);
      // strict improvement keeps the lexicographically lowest argmin
      if (sse < best_sse) {
        best_sse = sse;
        best_x = x;
        best_y = y;
      }
    }
  }

  // phase 2: Gauss-Newton with backtracking; never accepts a worse SSE
  double x = best_x;
  double y = best_y;
  double sse = best_sse;
  int iterations = 0;
  for (int it = 0; it < options.max_iterations; ++it) {
    double jtj00 = 0.0, jtj01 = 0.0, jtj11 = 0.0, jtr0 = 0.0, jtr1 = 0.0;
    for (std::size_t i = 0; i < observations.size(); ++i) {
      const Vec3& p = observations[i].robot_position;
      const double dx = x - p.x;
      const double dy = y - p.y;
      const double dz = z - p.z;
      const double dist = std::sqrt(dx * dx + dy * dy + dz * dz);
      if (dist < 1e-12) continue;
      const double r = dist - ranges[i];
      const double jx = dx / dist;
      const double jy = dy / dist;
      jtj00 += jx * jx;
      jtj01 += jx * jy;
      jtj11 += jy * jy;
      jtr0 += jx * r;
      jtr1 += jy * r;
    }
    const double det = jtj00 * jtj11 - jtj01 * jtj01;
    if (std::abs(det) < 1e-15) break;
    double step_x = -(jtj11 * jtr0 - jtj01 * jtr1) / det;
    double step_y = -(-jtj01 * jtr0 + jtj00 * jtr1) / det;

    double scale = 1.0;
    bool improved = false;
    for (int bt = 0; bt < 20; ++bt, scale *= 0.5) {
      const double nsse =
          detail::range_sse(observations, x + scale * step_x, y + scale * step_y, z, ranges);
      if (nsse < sse) {
        x += scale * step_x;
        y += scale * step_y;
        sse = nsse;
        improved = true;
        break;
      }
    }
    ++iterations;
    if (!improved) break;
    if (std::hypot(scale * step_x, scale * step_y) < 1e-10) break;
  }

  BSEstimate estimate;
  estimate.position = {x, y, z};
  estimate.residual_m = std::sqrt(sse / observations.size());
  estimate.iterations = iterations;
  return estimate;
}

// ---------------------------------------------------------------------------
// Observation CSV: "x,y,z,n,mu" per line; a leading header row is allowed.
// ---------------------------------------------------------------------------

inline std::vector<TAObservation> read_observations_csv(const std::string& text) {
  std::vector<TAObservation> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    TAObservation o;
    if (!(ls >> o.robot_position.x >> o.robot_position.y >> o.robot_position.z >> o.n >>
          o.config.mu)) {
      if (out.empty()) continue;  // header row
      throw Error(ErrorCode::malformed_header, "bad observation line: " + line);
    }
    o.validate();
    out.push_back(o);
  }
  return out;
}

inline nlohmann::ordered_json estimate_to_json(const BSEstimate& e) {
  nlohmann::ordered_json j;
  j["position"] = {e.position.x, e.position.y, e.position.z};
  j["residual_m"] = e.residual_m;
  j["iterations"] = e.iterations;
  return j;
}

}  // namespace ndt
