#pragma once

#include <string>

#include "walkex/lie.hpp"

namespace walkex {

enum class ShapeKind { Sphere, Capsule, Box };

const char* shapeKindName(ShapeKind kind);
ShapeKind parseShapeKind(const std::string& name);

/**
 * Convex primitive posed in some frame. A capsule is the segment
 * center +- halfLength * rotation.col(0) swept by radius; a box has
 * rotation-aligned half extents.
 */
struct Shape
{
  ShapeKind kind = ShapeKind::Sphere;
  Vec3 center = Vec3::Zero();
  Mat3 rotation = Mat3::Identity();
  double radius = 0.0;
  double halfLength = 0.0;
  Vec3 halfExtents = Vec3::Zero();

  static Shape sphere(const Vec3& center, double radius);
  static Shape capsule(const Vec3& a, const Vec3& b, double radius);
  static Shape box(const Vec3& center, const Mat3& rotation, const Vec3& halfExtents);

  /// The same shape seen from a parent frame: x_parent = r * x + p.
  Shape transformed(const Mat3& r, const Vec3& p) const;

  /// Support point of the shape without its radius (point, segment or box).
  Vec3 coreSupport(const Vec3& direction) const;
  double margin() const { return kind == ShapeKind::Box ? 0.0 : radius; }
  void validate(const std::string& keyPath) const;
};

struct ClosestPoints
{
  Vec3 p1 = Vec3::Zero();  // on the first shape
  Vec3 p2 = Vec3::Zero();  // on the second shape
  double distance = 0.0;
  Vec3 normal = Vec3::Zero();  // (p2 - p1) / d, zero if it cannot be determined
  bool penetrating = false;
  int iterations = 0;
};

/**
 * Minimum-distance witness pair by GJK on the core shapes (the radius is
 * added afterwards). The sub-simplex step enumerates all faces of the
 * current simplex, which is slower than Johnson's recursion but has no
 * degenerate cases.
 */
ClosestPoints closestPoints(const Shape& a, const Shape& b);

}  // namespace walkex
