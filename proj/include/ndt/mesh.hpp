#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "ndt/geometry.hpp"
#include "ndt/io.hpp"

namespace ndt {

// Mesh vertices are stored in float32, matching the binary STL payload.
struct Vec3f {
  float x = 0.0f;
  float y = 0.0f;
  float z = 0.0f;

  bool operator==(const Vec3f&) const = default;

  Vec3 to_vec3() const { return {x, y, z}; }
  static Vec3f from_vec3(const Vec3& v) {
    return {static_cast<float>(v.x), static_cast<float>(v.y), static_cast<float>(v.z)};
  }
};

struct TriangleMesh {
  std::vector<Vec3f> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;
  std::vector<Vec3f> normals;  // per triangle, unit length

  bool operator==(const TriangleMesh&) const = default;

  std::size_t triangle_count() const { return triangles.size(); }

  void validate() const {
    if (normals.size() != triangles.size())
      throw Error(ErrorCode::invariant_violation, "one normal per triangle required");
    for (const auto& t : triangles) {
      for (auto i : t)
        if (i >= vertices.size())
          throw Error(ErrorCode::invariant_violation, "triangle index out of range");
      const Vec3 a = vertices[t[0]].to_vec3();
      const Vec3 b = vertices[t[1]].to_vec3();
      const Vec3 c = vertices[t[2]].to_vec3();
      if ((b - a).cross(c - a).norm() == 0.0)
        throw Error(ErrorCode::invariant_violation, "degenerate (zero-area) triangle");
    }
    for (const auto& n : normals) {
      if (std::abs(n.to_vec3().norm() - 1.0) > 1e-6)
        throw Error(ErrorCode::invariant_violation, "triangle normal not unit length");
    }
  }

  Aabb bounds() const {
    Aabb box;
    for (const auto& v : vertices) box.expand(v.to_vec3());
    return box;
  }
};

inline Vec3f face_normal(const Vec3f& a, const Vec3f& b, const Vec3f& c) {
  const Vec3 n = (b.to_vec3() - a.to_vec3()).cross(c.to_vec3() - a.to_vec3());
  return Vec3f::from_vec3(n.normalized());
}

// ---------------------------------------------------------------------------
// Binary STL: 80-byte header, u32 triangle count, 50 bytes per triangle.
// ---------------------------------------------------------------------------

inline constexpr const char* kStlHeaderText = "ndt binary stl";

inline Bytes write_stl(const TriangleMesh& mesh) {
  mesh.validate();
  Bytes out;
  out.reserve(84 + 50 * mesh.triangles.size());
  char header[80] = {};
  std::snprintf(header, sizeof(header), "%s", kStlHeaderText);
  out.insert(out.end(), header, header + 80);
  put_u32le(out, static_cast<std::uint32_t>(mesh.triangles.size()));
  for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
    const auto& n = mesh.normals[i];
    put_f32le(out, n.x);
    put_f32le(out, n.y);
    put_f32le(out, n.z);
    for (auto vi : mesh.triangles[i]) {
      const auto& v = mesh.vertices[vi];
      put_f32le(out, v.x);
      put_f32le(out, v.y);
      put_f32le(out, v.z);
    }
    put_u16le(out, 0);  // attribute byte count
  }
  return out;
}

// Reads binary STL written by write_stl (vertices are not deduplicated).
inline TriangleMesh read_stl(const Bytes& bytes) {
  if (bytes.size() < 84) throw Error(ErrorCode::truncated_payload, "STL shorter than 84 bytes");
  const std::uint32_t count = get_u32le(bytes.data() + 80);
  if (bytes.size() != 84 + 50ull * count)
    throw Error(ErrorCode::truncated_payload,
                "STL length does not match triangle count " + std::to_string(count));
  TriangleMesh mesh;
  mesh.vertices.reserve(3ull * count);
  mesh.triangles.reserve(count);
  mesh.normals.reserve(count);
  const std::uint8_t* p = bytes.data() + 84;
  for (std::uint32_t i = 0; i < count; ++i, p += 50) {
    mesh.normals.push_back({get_f32le(p), get_f32le(p + 4), get_f32le(p + 8)});
    const std::uint32_t base = static_cast<std::uint32_t>(mesh.vertices.size());
    for (int v = 0; v < 3; ++v) {
      const std::uint8_t* q = p + 12 + 12 * v;
      mesh.vertices.push_back({get_f32le(q), get_f32le(q + 4), get_f32le(q + 8)});
    }
    mesh.triangles.push_back({base, base + 1, base + 2});
  }
  mesh.validate();
  return mesh;
}

// ---------------------------------------------------------------------------
// ASCII PLY 1.0 with vertex + face elements. Normals are not stored; the
// reader recomputes them from the winding order.
// ---------------------------------------------------------------------------

inline Bytes write_ply(const TriangleMesh& mesh) {
  mesh.validate();
  std::string out;
  out += "ply\n";
  out += "format ascii 1.0\n";
  out += "element vertex " + std::to_string(mesh.vertices.size()) + "\n";
  out += "property float x\n";
  out += "property float y\n";
  out += "property float z\n";
  out += "element face " + std::to_string(mesh.triangles.size()) + "\n";
  out += "property list uchar int vertex_indices\n";
  out += "end_header\n";
  for (const auto& v : mesh.vertices) {
    out += format_f32(v.x);
    out += ' ';
    out += format_f32(v.y);
    out += ' ';
    out += format_f32(v.z);
    out += '\n';
  }
  for (const auto& t : mesh.triangles) {
    out += "3 " + std::to_string(t[0]) + " " + std::to_string(t[1]) + " " +
           std::to_string(t[2]) + "\n";
  }
  return Bytes(out.begin(), out.end());
}

inline TriangleMesh read_ply(const Bytes& bytes) {
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::string line;
  std::size_t n_vertices = 0;
  std::size_t n_faces = 0;
  bool in_header = true;
  if (!std::getline(in, line) || line != "ply")
    throw Error(ErrorCode::malformed_header, "not a PLY file");
  while (in_header && std::getline(in, line)) {
    if (line == "end_header") {
      in_header = false;
    } else if (line.rfind("element vertex ", 0) == 0) {
      n_vertices = std::stoull(line.substr(15));
    } else if (line.rfind("element face ", 0) == 0) {
      n_faces = std::stoull(line.substr(13));
    } else if (line.rfind("format ", 0) == 0 && line != "format ascii 1.0") {
      throw Error(ErrorCode::malformed_header, "only ascii 1.0 PLY supported");
    }
  }
  if (in_header) throw Error(ErrorCode::malformed_header, "missing end_header");

  TriangleMesh mesh;
  mesh.vertices.resize(n_vertices);
  for (std::size_t i = 0; i < n_vertices; ++i) {
    if (!std::getline(in, line))
      throw Error(ErrorCode::truncated_payload, "missing vertex line");
    std::istringstream ls(line);
    if (!(ls >> mesh.vertices[i].x >> mesh.vertices[i].y >> mesh.vertices[i].z))
      throw Error(ErrorCode::malformed_header, "bad vertex line: " + line);
  }
  mesh.triangles.resize(n_faces);
  mesh.normals.resize(n_faces);
  for (std::size_t i = 0; i < n_faces; ++i) {
    if (!std::getline(in, line))
      throw Error(ErrorCode::truncated_payload, "missing face line");
    std::istringstream ls(line);
    int arity = 0;
    auto& t = mesh.triangles[i];
    if (!(ls >> arity >> t[0] >> t[1] >> t[2]) || arity != 3)
      throw Error(ErrorCode::malformed_header, "only triangle faces supported: " + line);
    for (auto vi : t)
      if (vi >= mesh.vertices.size())
        throw Error(ErrorCode::malformed_header, "face index out of range");
    mesh.normals[i] = face_normal(mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
  }
  mesh.validate();
  return mesh;
}

}  // namespace ndt
