#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <thread>
#include <vector>

#include "json.hpp"
#include "ndt/io.hpp"
#include "ndt/raytrace.hpp"

namespace ndt {

inline double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }
inline double mw_to_dbm(double mw) { return 10.0 * std::log10(mw); }

struct ReceiverGridSpec {
  double xmin = 0.0;
  double ymin = 0.0;
  double xmax = 1.0;
  double ymax = 1.0;
  double spacing = 0.5;
  double height = 1.0;

  bool operator==(const ReceiverGridSpec&) const = default;

  void validate() const {
    if (!(spacing > 0.0)) throw Error(ErrorCode::invariant_violation, "spacing must be > 0");
    if (!(xmax > xmin) || !(ymax > ymin))
      throw Error(ErrorCode::invariant_violation, "receiver bounds are degenerate");
  }

  int nx() const { return static_cast<int>(std::floor((xmax - xmin) / spacing + 1e-9)) + 1; }
  int ny() const { return static_cast<int>(std::floor((ymax - ymin) / spacing + 1e-9)) + 1; }
  std::size_t node_count() const { return static_cast<std::size_t>(nx()) * ny(); }

  // x fastest
  std::size_t index(int ix, int iy) const {
    return static_cast<std::size_t>(iy) * nx() + ix;
  }

  Vec3 node(int ix, int iy) const {
    return {xmin + ix * spacing, ymin + iy * spacing, height};
  }

  bool contains(double x, double y) const {
    return x >= xmin && x <= xmin + (nx() - 1) * spacing && y >= ymin &&
           y <= ymin + (ny() - 1) * spacing;
  }
};

// Regular grid of received-power samples at fixed height. NaN marks a node
// explicitly unreachable (receiver inside solid geometry).
struct RadioMap {
  ReceiverGridSpec spec;
  std::vector<double> samples;  // dBm, NaN = unreachable
  TxConfig tx;
  bool expanded = false;  // bounds were auto-grown to cover the scene

  double sample(int ix, int iy) const { return samples[spec.index(ix, iy)]; }
  bool reachable(int ix, int iy) const { return std::isfinite(sample(ix, iy)); }
};

namespace detail {

inline ReceiverGridSpec expand_to_cover(ReceiverGridSpec spec, const Aabb& scene_bounds,
                                        bool* expanded) {
  if (scene_bounds.empty()) return spec;
  auto grow_down = [&](double lo, double target) {
    if (target >= lo) return lo;
    const double steps = std::ceil((lo - target) / spec.spacing - 1e-9);
    return lo - steps * spec.spacing;
  };
  auto grow_up = [&](double hi, double target) {
    if (target <= hi) return hi;
    const double steps = std::ceil((target - hi) / spec.spacing - 1e-9);
    return hi + steps * spec.spacing;
  };
  const ReceiverGridSpec before = spec;
  spec.xmin = grow_down(spec.xmin, scene_bounds.lo.x);
  spec.ymin = grow_down(spec.ymin, scene_bounds.lo.y);
  spec.xmax = grow_up(spec.xmax, scene_bounds.hi.x);
  spec.ymax = grow_up(spec.ymax, scene_bounds.hi.y);
  if (expanded && !(spec == before)) *expanded = true;
  return spec;
}

}  // namespace detail

// Traces every receiver node. `unreachable` (optional) marks nodes that sit
// inside solid geometry; their samples become NaN. Output is identical for
// any worker count.
inline RadioMap evaluate_map(const Scene& scene, const TxConfig& tx, ReceiverGridSpec spec,
                             int max_order, const MaterialModel& material = {},
                             int threads = 0,
                             const std::function<bool(const Vec3&)>& unreachable = {},
                             bool use_bvh = true) {
  spec.validate();
  tx.validate();

  RadioMap map;
  map.spec = detail::expand_to_cover(spec, scene.bounds(), &map.expanded);
  map.tx = tx;
  map.samples.assign(map.spec.node_count(), 0.0);

  const int nx = map.spec.nx();
  const int ny = map.spec.ny();
  const std::size_t total = map.spec.node_count();

  auto eval_node = [&](std::size_t i) {
    const int ix = static_cast<int>(i % nx);
    const int iy = static_cast<int>(i / nx);
    const Vec3 node = map.spec.node(ix, iy);
    if (unreachable && unreachable(node)) {
      map.samples[i] = std::numeric_limits<double>::quiet_NaN();
      return;
    }
    const auto paths = trace_paths(scene, tx, node, max_order, material, use_bvh);
    map.samples[i] = received_power(paths);
  };

  int workers = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min<int>(workers, static_cast<int>(total)));
  if (workers == 1) {
    for (std::size_t i = 0; i < total; ++i) eval_node(i);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < total; i += workers) eval_node(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  (void)ny;
  return map;
}

// Bilinear in linear power (mW) over the four enclosing nodes, exact at
// nodes. Unreachable corners drop out of the stencil; if the whole stencil is
// unreachable, falls back to the nearest reachable node.
inline double interpolate(const RadioMap& map, double x, double y) {
  const ReceiverGridSpec& s = map.spec;
  if (!s.contains(x, y))
    throw Error(ErrorCode::out_of_bounds, "query outside radio map bounds");

  double fx = (x - s.xmin) / s.spacing;
  double fy = (y - s.ymin) / s.spacing;
  int ix = std::min(static_cast<int>(std::floor(fx)), s.nx() - 1);
  int iy = std::min(static_cast<int>(std::floor(fy)), s.ny() - 1);
  double u = fx - ix;
  double v = fy - iy;
  if (ix == s.nx() - 1 && s.nx() > 1) {  // right edge: use the previous cell
    --ix;
    u = fx - ix;
  }
  if (iy == s.ny() - 1 && s.ny() > 1) {
    --iy;
    v = fy - iy;
  }

  const int ix1 = std::min(ix + 1, s.nx() - 1);
  const int iy1 = std::min(iy + 1, s.ny() - 1);
  const double w[4] = {(1 - u) * (1 - v), u * (1 - v), (1 - u) * v, u * v};
  const double samples[4] = {map.sample(ix, iy), map.sample(ix1, iy), map.sample(ix, iy1),
                             map.sample(ix1, iy1)};
  // exact at grid nodes
  for (int k = 0; k < 4; ++k)
    if (w[k] == 1.0 && std::isfinite(samples[k])) return samples[k];
  double wsum = 0.0;
  double acc = 0.0;
  for (int k = 0; k < 4; ++k) {
    if (!std::isfinite(samples[k])) continue;
    acc += w[k] * dbm_to_mw(samples[k]);
    wsum += w[k];
  }
  if (wsum > 0.0) return mw_to_dbm(acc / wsum);

  // whole stencil unreachable: nearest reachable node, lowest index on ties
  double best_d = std::numeric_limits<double>::infinity();
  double best = std::numeric_limits<double>::quiet_NaN();
  for (int jy = 0; jy < s.ny(); ++jy)
    for (int jx = 0; jx < s.nx(); ++jx) {
      if (!map.reachable(jx, jy)) continue;
      const Vec3 n = s.node(jx, jy);
      const double d = (n.x - x) * (n.x - x) + (n.y - y) * (n.y - y);
      if (d < best_d) {
        best_d = d;
        best = map.sample(jx, jy);
      }
    }
  if (!std::isfinite(best))
    throw Error(ErrorCode::out_of_bounds, "radio map has no reachable nodes");
  return best;
}

// RMS difference in dB over nodes reachable in both maps.
inline double map_delta(const RadioMap& a, const RadioMap& b) {
  if (!(a.spec == b.spec))
    throw Error(ErrorCode::spec_mismatch, "radio maps have different specs");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    if (!std::isfinite(a.samples[i]) || !std::isfinite(b.samples[i])) continue;
    const double d = a.samples[i] - b.samples[i];
    sum += d * d;
    ++n;
  }
  return n == 0 ? 0.0 : std::sqrt(sum / n);
}

// Empirical CDF of interpolated power along a polyline, resampled at a fixed
// arc-length step. Returns (power_dbm, cumulative probability) steps.
inline std::vector<std::pair<double, double>> signal_cdf(
    const RadioMap& map, const std::vector<std::pair<double, double>>& path,
    double step = 0.25) {
  if (path.empty()) throw Error(ErrorCode::out_of_bounds, "empty path");
  for (const auto& [x, y] : path)
    if (!map.spec.contains(x, y))
      throw Error(ErrorCode::out_of_bounds, "path point outside radio map");

  std::vector<double> values;
  if (path.size() == 1) {
    values.push_back(interpolate(map, path[0].first, path[0].second));
  } else {
    std::vector<double> cumlen(path.size(), 0.0);
    for (std::size_t i = 1; i < path.size(); ++i) {
      const double dx = path[i].first - path[i - 1].first;
      const double dy = path[i].second - path[i - 1].second;
      cumlen[i] = cumlen[i - 1] + std::sqrt(dx * dx + dy * dy);
    }
    const double total = cumlen.back();
    std::size_t seg = 0;
    const std::size_t n_steps = static_cast<std::size_t>(std::floor(total / step + 1e-9));
    for (std::size_t k = 0; k <= n_steps; ++k) {
      const double s = k * step;
      while (seg + 2 < path.size() && cumlen[seg + 1] < s) ++seg;
      const double seg_len = cumlen[seg + 1] - cumlen[seg];
      const double f = seg_len > 0.0 ? (s - cumlen[seg]) / seg_len : 0.0;
      const double x = path[seg].first + f * (path[seg + 1].first - path[seg].first);
      const double y = path[seg].second + f * (path[seg + 1].second - path[seg].second);
      values.push_back(interpolate(map, x, y));
    }
    if (n_steps * step < total - 1e-9) {
      values.push_back(interpolate(map, path.back().first, path.back().second));
    }
  }

  std::sort(values.begin(), values.end());
  std::vector<std::pair<double, double>> cdf;
  const double n = static_cast<double>(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!cdf.empty() && cdf.back().first == values[i])
      cdf.back().second = (i + 1) / n;
    else
      cdf.emplace_back(values[i], (i + 1) / n);
  }
  return cdf;
}

// ---------------------------------------------------------------------------
// Map file: one JSON spec line, '\n', then float64 LE samples (x fastest).
// ---------------------------------------------------------------------------

inline Bytes write_radiomap(const RadioMap& map) {
  nlohmann::ordered_json j;
  j["bounds"] = {map.spec.xmin, map.spec.ymin, map.spec.xmax, map.spec.ymax};
  j["spacing"] = map.spec.spacing;
  j["height"] = map.spec.height;
  j["tx"] = {{"position", {map.tx.position.x, map.tx.position.y, map.tx.position.z}},
             {"power_dbm", map.tx.power_dbm},
             {"frequency_hz", map.tx.frequency_hz},
             {"tx_gain_dbi", map.tx.tx_gain_dbi},
             {"rx_gain_dbi", map.tx.rx_gain_dbi}};
  const std::string header = j.dump();
  Bytes out(header.begin(), header.end());
  out.push_back('\n');
  for (double v : map.samples) put_f64le(out, v);
  return out;
}

inline RadioMap read_radiomap(const Bytes& bytes) {
  const auto nl = std::find(bytes.begin(), bytes.end(), std::uint8_t('\n'));
  if (nl == bytes.end()) throw Error(ErrorCode::malformed_header, "missing map header line");
  nlohmann::ordered_json j =
      nlohmann::ordered_json::parse(std::string(bytes.begin(), nl), nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw Error(ErrorCode::malformed_header, "map header is not a JSON object");

  RadioMap map;
  try {
    const auto& b = j.at("bounds");
    map.spec.xmin = b.at(0).get<double>();
    map.spec.ymin = b.at(1).get<double>();
    map.spec.xmax = b.at(2).get<double>();
    map.spec.ymax = b.at(3).get<double>();
    map.spec.spacing = j.at("spacing").get<double>();
    map.spec.height = j.at("height").get<double>();
    const auto& t = j.at("tx");
    const auto& p = t.at("position");
    map.tx.position = {p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()};
    map.tx.power_dbm = t.at("power_dbm").get<double>();
    map.tx.frequency_hz = t.at("frequency_hz").get<double>();
    map.tx.tx_gain_dbi = t.at("tx_gain_dbi").get<double>();
    map.tx.rx_gain_dbi = t.at("rx_gain_dbi").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::malformed_header, e.what());
  }
  map.spec.validate();

  const std::size_t n = map.spec.node_count();
  const std::size_t have = static_cast<std::size_t>(bytes.end() - (nl + 1));
  if (have < n * 8)
    throw Error(ErrorCode::truncated_payload, "map payload has " + std::to_string(have) +
                                                  " bytes, need " + std::to_string(n * 8));
  const std::uint8_t* p = &*(nl + 1);
  map.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i, p += 8) map.samples[i] = get_f64le(p);
  return map;
}

inline std::string cdf_to_csv(const std::vector<std::pair<double, double>>& cdf) {
  std::string out = "power_dbm,cum_prob\n";
  for (const auto& [p, q] : cdf) out += format_f64(p) + "," + format_f64(q) + "\n";
  return out;
}

}  // namespace ndt
