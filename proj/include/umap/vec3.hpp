#pragma once

#include <cmath>

namespace umap {

// World-space vector in engine units (u).
struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  constexpr bool operator==(const Vec3&) const = default;
};

constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

inline double norm(const Vec3& v) { return std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z); }

inline double distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

constexpr double distance_sq(const Vec3& a, const Vec3& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

// Distance in the ground plane, ignoring altitude.
inline double planar_distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

// Unit vector in the ground plane pointing from `from` to `to`; zero when coincident.
inline Vec3 planar_direction(const Vec3& from, const Vec3& to) {
  const double dx = to.x - from.x;
  const double dy = to.y - from.y;
  const double len = std::sqrt(dx * dx + dy * dy);
  if (len == 0.0) return {};
  return {dx / len, dy / len, 0.0};
}

// Axis-aligned box given by center and half sizes.
struct Box {
  Vec3 center;
  Vec3 half;

  constexpr bool contains(const Vec3& p) const {
    return p.x >= center.x - half.x && p.x <= center.x + half.x && p.y >= center.y - half.y &&
           p.y <= center.y + half.y && p.z >= center.z - half.z && p.z <= center.z + half.z;
  }
  // Strictly inside, faces excluded.
  constexpr bool contains_interior(const Vec3& p) const {
    return p.x > center.x - half.x && p.x < center.x + half.x && p.y > center.y - half.y &&
           p.y < center.y + half.y && p.z > center.z - half.z && p.z < center.z + half.z;
  }
  constexpr bool operator==(const Box&) const = default;
};

}  // namespace umap
