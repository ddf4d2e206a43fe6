#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace nbv {

using Vec3 = Eigen::Vector3d;
using Vec3i = Eigen::Vector3i;
using Vec2 = Eigen::Vector2d;

// Axis-aligned face order used everywhere a face index appears:
// 0:+x 1:-x 2:+y 3:-y 4:+z 5:-z.
inline constexpr int kNumFaces = 6;

inline const std::array<Vec3i, kNumFaces>& face_offsets() {
  static const std::array<Vec3i, kNumFaces> k = {
      Vec3i(1, 0, 0), Vec3i(-1, 0, 0), Vec3i(0, 1, 0),
      Vec3i(0, -1, 0), Vec3i(0, 0, 1), Vec3i(0, 0, -1)};
  return k;
}

inline Vec3 face_normal(int face) {
  return face_offsets()[face].cast<double>();
}

// Face index whose normal is the given axis-aligned direction.
inline int face_index(int axis, int sign) {
  return 2 * axis + (sign > 0 ? 0 : 1);
}

// Opposite face across a shared boundary (+x <-> -x, ...).
inline int opposite_face(int face) { return face ^ 1; }

using FaceMask = std::uint8_t;  // low 6 bits, one per face

inline bool face_set(FaceMask m, int face) { return (m >> face) & 1; }
inline FaceMask with_face(FaceMask m, int face) {
  return static_cast<FaceMask>(m | (1u << face));
}
inline int face_count(FaceMask m) {
  return __builtin_popcount(static_cast<unsigned>(m & 0x3f));
}

struct Aabb {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void expand(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void expand(const Aabb& b) {
    lo = lo.cwiseMin(b.lo);
    hi = hi.cwiseMax(b.hi);
  }
  Vec3 center() const { return 0.5 * (lo + hi); }
  Vec3 extent() const { return hi - lo; }
  bool valid() const { return (lo.array() <= hi.array()).all(); }
  bool contains(const Vec3& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
};

struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace nbv
