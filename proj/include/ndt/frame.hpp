#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "ndt/geometry.hpp"
#include "ndt/io.hpp"

namespace ndt {

inline constexpr std::uint8_t kDatatypeFloat32 = 7;
inline constexpr std::uint32_t kPointStep = 16;  // 4 fields x 4 bytes

// Header of one pose-tagged sensor frame. On disk: a single-line JSON object,
// '\n', then height*width*point_step bytes of little-endian payload.
struct FrameHeader {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint8_t datatype = kDatatypeFloat32;
  bool is_bigendian = false;
  std::uint32_t point_step = kPointStep;
  double stamp = 0.0;  // seconds
  Pose pose;

  bool operator==(const FrameHeader&) const = default;

  std::size_t payload_bytes() const {
    return static_cast<std::size_t>(height) * width * point_step;
  }
};

struct PointXYZI {
  float x = 0.0f;
  float y = 0.0f;
  float z = 0.0f;
  float intensity = 0.0f;

  bool operator==(const PointXYZI&) const = default;
};

struct PointFrame {
  FrameHeader header;
  std::vector<PointXYZI> points;

  bool operator==(const PointFrame&) const = default;

  void validate() const {
    if (header.datatype != kDatatypeFloat32)
      throw Error(ErrorCode::invariant_violation, "datatype must be 7 (Float32)");
    if (header.point_step != kPointStep)
      throw Error(ErrorCode::invariant_violation, "point_step must be 16");
    if (header.is_bigendian)
      throw Error(ErrorCode::invariant_violation, "frames are little-endian");
    if (points.size() != static_cast<std::size_t>(header.height) * header.width)
      throw Error(ErrorCode::invariant_violation, "point count != height*width");
    if (!header.pose.valid())
      throw Error(ErrorCode::invariant_violation, "pose quaternion not unit length");
    for (const auto& p : points) {
      if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
        throw Error(ErrorCode::invariant_violation, "non-finite point coordinate");
    }
  }
};

namespace detail {

// Canonical header key order; dumping the parsed header must reproduce the
// original line byte for byte.
inline nlohmann::ordered_json header_to_json(const FrameHeader& h) {
  nlohmann::ordered_json j;
  j["height"] = h.height;
  j["width"] = h.width;
  j["datatype"] = h.datatype;
  j["is_bigendian"] = h.is_bigendian;
  j["point_step"] = h.point_step;
  j["stamp"] = h.stamp;
  j["pose"] = {{"t", {h.pose.translation.x, h.pose.translation.y, h.pose.translation.z}},
               {"q", {h.pose.rotation.w, h.pose.rotation.x, h.pose.rotation.y, h.pose.rotation.z}}};
  return j;
}

inline FrameHeader header_from_json(const nlohmann::ordered_json& j) {
  FrameHeader h;
  try {
    h.height = j.at("height").get<std::uint32_t>();
    h.width = j.at("width").get<std::uint32_t>();
    h.datatype = j.at("datatype").get<std::uint8_t>();
    h.is_bigendian = j.at("is_bigendian").get<bool>();
    h.point_step = j.at("point_step").get<std::uint32_t>();
    h.stamp = j.at("stamp").get<double>();
    const auto& t = j.at("pose").at("t");
    const auto& q = j.at("pose").at("q");
    if (t.size() != 3 || q.size() != 4)
      throw Error(ErrorCode::malformed_header, "pose arrays must be t[3], q[4]");
    h.pose.translation = {t[0].get<double>(), t[1].get<double>(), t[2].get<double>()};
    h.pose.rotation = {q[0].get<double>(), q[1].get<double>(), q[2].get<double>(),
                       q[3].get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::malformed_header, e.what());
  }
  return h;
}

}  // namespace detail

inline Bytes write_frame(const PointFrame& frame) {
  frame.validate();
  const std::string header = detail::header_to_json(frame.header).dump();
  Bytes out(header.begin(), header.end());
  out.push_back('\n');
  out.reserve(out.size() + frame.header.payload_bytes());
  for (const auto& p : frame.points) {
    put_f32le(out, p.x);
    put_f32le(out, p.y);
    put_f32le(out, p.z);
    put_f32le(out, p.intensity);
  }
  return out;
}

inline PointFrame read_frame(const Bytes& bytes) {
  const auto nl = std::find(bytes.begin(), bytes.end(), std::uint8_t('\n'));
  if (nl == bytes.end())
    throw Error(ErrorCode::malformed_header, "missing header line terminator");
  const std::string line(bytes.begin(), nl);

  nlohmann::ordered_json j = nlohmann::ordered_json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw Error(ErrorCode::malformed_header, "header is not a JSON object");

  PointFrame frame;
  frame.header = detail::header_from_json(j);
  if (frame.header.datatype != kDatatypeFloat32)
    throw Error(ErrorCode::unsupported_datatype,
                "datatype " + std::to_string(frame.header.datatype) + " not supported");
  if (frame.header.point_step != kPointStep)
    throw Error(ErrorCode::malformed_header, "point_step must be 16");
  if (frame.header.is_bigendian)
    throw Error(ErrorCode::malformed_header, "big-endian payloads not supported");

  const std::size_t need = frame.header.payload_bytes();
  const std::size_t have = static_cast<std::size_t>(bytes.end() - (nl + 1));
  if (have < need)
    throw Error(ErrorCode::truncated_payload, "payload has " + std::to_string(have) +
                                                  " bytes, need " + std::to_string(need));

  const std::uint8_t* p = &*(nl + 1);
  const std::size_t n = static_cast<std::size_t>(frame.header.height) * frame.header.width;
  frame.points.resize(n);
  for (std::size_t i = 0; i < n; ++i, p += kPointStep) {
    frame.points[i] = {get_f32le(p), get_f32le(p + 4), get_f32le(p + 8), get_f32le(p + 12)};
  }
  frame.validate();
  return frame;
}

}  // namespace ndt
