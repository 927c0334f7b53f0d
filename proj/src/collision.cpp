#include "walkex/collision.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "walkex/errors.hpp"

namespace walkex {

const char* shapeKindName(ShapeKind kind)
{
  switch (kind) {
    case ShapeKind::Sphere: return "sphere";
    case ShapeKind::Capsule: return "capsule";
    case ShapeKind::Box: return "box";
  }
  return "?";
}

ShapeKind parseShapeKind(const std::string& name)
{
  if (name == "sphere") return ShapeKind::Sphere;
  if (name == "capsule") return ShapeKind::Capsule;
  if (name == "box") return ShapeKind::Box;
  throw ConfigError("shape", "unknown shape '" + name + "' (sphere, capsule, box)");
}

Shape Shape::sphere(const Vec3& center, double radius)
{
  Shape s;
  s.kind = ShapeKind::Sphere;
  s.center = center;
  s.radius = radius;
  return s;
}

Shape Shape::capsule(const Vec3& a, const Vec3& b, double radius)
{
  Shape s;
  s.kind = ShapeKind::Capsule;
  s.center = 0.5 * (a + b);
  s.radius = radius;
  const Vec3 axis = b - a;
  s.halfLength = 0.5 * axis.norm();
  if (s.halfLength > 0.0) {
    // any frame whose first column is the axis
    const Vec3 x = axis.normalized();
    const Vec3 helper = std::abs(x.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX();
    const Vec3 y = helper.cross(x).normalized();
    s.rotation.col(0) = x;
    s.rotation.col(1) = y;
    s.rotation.col(2) = x.cross(y);
  }
  return s;
}

Shape Shape::box(const Vec3& center, const Mat3& rotation, const Vec3& halfExtents)
{
  Shape s;
  s.kind = ShapeKind::Box;
  s.center = center;
  s.rotation = rotation;
  s.halfExtents = halfExtents;
  return s;
}

Shape Shape::transformed(const Mat3& r, const Vec3& p) const
{
  Shape s = *this;
  s.center = r * center + p;
  s.rotation = r * rotation;
  return s;
}

Vec3 Shape::coreSupport(const Vec3& d) const
{
  switch (kind) {
    case ShapeKind::Sphere: return center;
    case ShapeKind::Capsule: {
      const Vec3 axis = rotation.col(0);
      return center + (axis.dot(d) >= 0.0 ? halfLength : -halfLength) * axis;
    }
    case ShapeKind::Box: {
      const Vec3 local = rotation.transpose() * d;
      Vec3 corner;
      for (int i = 0; i < 3; ++i) corner(i) = local(i) >= 0.0 ? halfExtents(i) : -halfExtents(i);
      return center + rotation * corner;
    }
  }
  return center;
}

void Shape::validate(const std::string& keyPath) const
{
  if (kind != ShapeKind::Box && !(radius > 0.0)) throw ConfigError(keyPath + ".radius", "must be positive");
  if (kind == ShapeKind::Capsule && !(halfLength >= 0.0)) {
    throw ConfigError(keyPath + ".half_length", "must be >= 0");
  }
  if (kind == ShapeKind::Box && !(halfExtents.minCoeff() > 0.0)) {
    throw ConfigError(keyPath + ".half_extents", "must be positive");
  }
}

namespace {

struct Vertex
{
  Vec3 w;  // a - b
  Vec3 a;
  Vec3 b;
};

struct SubResult
{
  double norm2 = 1e300;
  int count = 0;
  int index[4] = {0, 0, 0, 0};
  double lambda[4] = {0, 0, 0, 0};
};

/// Closest point to the origin of the hull of up to four vertices, by trying every face.
SubResult closestOnHull(const Vertex* v, int n)
{
  SubResult best;
  for (int mask = 1; mask < (1 << n); ++mask) {
    int idx[4];
    int k = 0;
    for (int i = 0; i < n; ++i) {
      if (mask & (1 << i)) idx[k++] = i;
    }
    double lambda[4] = {1.0, 0.0, 0.0, 0.0};
    if (k > 1) {
      Eigen::MatrixXd d(3, k - 1);
      for (int j = 1; j < k; ++j) d.col(j - 1) = v[idx[j]].w - v[idx[0]].w;
      const Eigen::MatrixXd g = d.transpose() * d;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(g);
      // skip degenerate faces; a lower-dimensional face covers the same point
      const double scale = g.diagonal().maxCoeff();
      if (!(scale > 0.0) || ldlt.vectorD().cwiseAbs().minCoeff() < 1e-12 * scale) continue;
      const Eigen::VectorXd mu = ldlt.solve(-d.transpose() * v[idx[0]].w);
      lambda[0] = 1.0 - mu.sum();
      for (int j = 1; j < k; ++j) lambda[j] = mu(j - 1);
      bool inside = true;
      for (int j = 0; j < k; ++j) inside = inside && lambda[j] > 0.0;
      if (!inside) continue;
    }
    Vec3 p = Vec3::Zero();
    for (int j = 0; j < k; ++j) p += lambda[j] * v[idx[j]].w;
    const double n2 = p.squaredNorm();
    if (n2 < best.norm2) {
      best.norm2 = n2;
      best.count = k;
      for (int j = 0; j < k; ++j) {
        best.index[j] = idx[j];
        best.lambda[j] = lambda[j];
      }
    }
  }
  return best;
}

}  // namespace

ClosestPoints closestPoints(const Shape& a, const Shape& b)
{
  Vertex simplex[4];
  int size = 0;
  double lambda[4] = {1.0, 0.0, 0.0, 0.0};

  Vec3 v = a.center - b.center;
  if (v.squaredNorm() == 0.0) v = Vec3::UnitX();
  {
    const Vec3 sa = a.coreSupport(-v), sb = b.coreSupport(v);
    simplex[size++] = {sa - sb, sa, sb};
    v = sa - sb;
  }

  ClosestPoints out;
  double previous = v.squaredNorm();
  int it = 0;
  for (; it < 128 && previous > 1e-24; ++it) {
    const Vec3 sa = a.coreSupport(-v), sb = b.coreSupport(v);
    const Vec3 w = sa - sb;
    if (previous - v.dot(w) <= 1e-14 * previous) break;
    bool duplicate = false;
    for (int i = 0; i < size; ++i) duplicate = duplicate || (simplex[i].w - w).squaredNorm() < 1e-28;
    if (duplicate) break;
    simplex[size++] = {w, sa, sb};

    const SubResult r = closestOnHull(simplex, size);
    if (r.norm2 >= previous) {
      // no progress: keep the previous simplex
      --size;
      break;
    }
    Vertex kept[4];
    for (int j = 0; j < r.count; ++j) {
      kept[j] = simplex[r.index[j]];
      lambda[j] = r.lambda[j];
    }
    size = r.count;
    v = Vec3::Zero();
    for (int j = 0; j < size; ++j) {
      simplex[j] = kept[j];
      v += lambda[j] * kept[j].w;
    }
    previous = v.squaredNorm();
    if (size == 4) break;  // origin enclosed
  }
  out.iterations = it;

  Vec3 pa = Vec3::Zero(), pb = Vec3::Zero();
  for (int j = 0; j < size; ++j) {
    pa += lambda[j] * simplex[j].a;
    pb += lambda[j] * simplex[j].b;
  }
  const double core = (pa - pb).norm();
  const bool touching = size == 4 || core < 1e-12;
  if (!touching) out.normal = (pb - pa) / core;
  out.p1 = pa + a.margin() * out.normal;
  out.p2 = pb - b.margin() * out.normal;
  out.distance = touching ? -(a.margin() + b.margin()) : core - a.margin() - b.margin();
  out.penetrating = out.distance <= 0.0;
  return out;
}

}  // namespace walkex
