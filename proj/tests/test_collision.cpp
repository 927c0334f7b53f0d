#include <cmath>
#include <random>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "test_util.hpp"
#include "walkex/collision.hpp"

using namespace walkex;
using walkex::testing::randomRotation;
using walkex::testing::randomVec;
using walkex::testing::uniform;

namespace {

using Cloud = Eigen::Matrix<double, 3, Eigen::Dynamic>;

Cloud fibonacciSphere(const Vec3& c, double r, int n, double zMin = -1.0, double zMax = 1.0,
                      const Mat3& frame = Mat3::Identity())
{
  Cloud out(3, n);
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double z = zMin + (zMax - zMin) * (i + 0.5) / n;
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    out.col(i) = c + r * (frame * Vec3(rho * std::cos(golden * i), rho * std::sin(golden * i), z));
  }
  return out;
}

// surface grid with the edges and corners included
Cloud sampleSurface(const Shape& s)
{
  switch (s.kind) {
    case ShapeKind::Sphere: return fibonacciSphere(s.center, s.radius, 10000);
    case ShapeKind::Box: {
      const int k = 41;
      Cloud out(3, 6 * k * k);
      int n = 0;
      for (int axis = 0; axis < 3; ++axis) {
        for (double side : {-1.0, 1.0}) {
          for (int i = 0; i < k; ++i) {
            for (int j = 0; j < k; ++j) {
              Vec3 p;
              p(axis) = side;
              p((axis + 1) % 3) = -1.0 + 2.0 * i / (k - 1);
              p((axis + 2) % 3) = -1.0 + 2.0 * j / (k - 1);
              out.col(n++) = s.center + s.rotation * p.cwiseProduct(s.halfExtents);
            }
          }
        }
      }
      return out;
    }
    case ShapeKind::Capsule: {
      // axis along local x: the caps are hemispheres about +-x
      Mat3 capFrame;
      capFrame << s.rotation.col(1), s.rotation.col(2), s.rotation.col(0);
      const Vec3 a = s.center - s.halfLength * s.rotation.col(0), b = s.center + s.halfLength * s.rotation.col(0);
      const Cloud capB = fibonacciSphere(b, s.radius, 2500, 0.0, 1.0, capFrame);
      const Cloud capA = fibonacciSphere(a, s.radius, 2500, -1.0, 0.0, capFrame);
      const int nt = 50, np = 100;
      Cloud side(3, nt * np);
      for (int i = 0; i < nt; ++i) {
        for (int j = 0; j < np; ++j) {
          const double t = -1.0 + 2.0 * i / (nt - 1), phi = 2.0 * M_PI * j / np;
          side.col(i * np + j) = s.center + s.rotation * Vec3(t * s.halfLength, s.radius * std::cos(phi),
                                                              s.radius * std::sin(phi));
        }
      }
      Cloud out(3, capA.cols() + capB.cols() + side.cols());
      out << capA, capB, side;
      return out;
    }
  }
  return {};
}

double bruteForceDistance(const Cloud& a, const Cloud& b)
{
  double best = 1e300;
  for (Eigen::Index i = 0; i < a.cols(); ++i) {
    best = std::min(best, (b.colwise() - a.col(i)).colwise().squaredNorm().minCoeff());
  }
  return std::sqrt(best);
}

Shape randomShape(std::mt19937& rng, const Vec3& center)
{
  const int kind = std::uniform_int_distribution<int>(0, 2)(rng);
  const Mat3 r = randomRotation(rng).matrix();
  if (kind == 0) return Shape::sphere(center, uniform(rng, 0.3, 0.9));
  if (kind == 1) {
    const Vec3 axis = r.col(0) * uniform(rng, 0.2, 0.8);
    return Shape::capsule(center - axis, center + axis, uniform(rng, 0.2, 0.5));
  }
  return Shape::box(center, r, Vec3(uniform(rng, 0.2, 0.8), uniform(rng, 0.2, 0.8), uniform(rng, 0.2, 0.8)));
}

}  // namespace

TEST(ClosestPoints, SpheresThreeApart)
{
  const ClosestPoints c = closestPoints(Shape::sphere(Vec3(0, 0, 0), 1.0), Shape::sphere(Vec3(3, 0, 0), 1.0));
  EXPECT_NEAR(c.distance, 1.0, 1e-12);
  EXPECT_FALSE(c.penetrating);
  EXPECT_LT((c.p1 - Vec3(1, 0, 0)).norm(), 1e-12);
  EXPECT_LT((c.p2 - Vec3(2, 0, 0)).norm(), 1e-12);
  EXPECT_LT((c.normal - Vec3(1, 0, 0)).norm(), 1e-12);
}

TEST(ClosestPoints, OffsetUnitBoxes)
{
  const Vec3 half(0.5, 0.5, 0.5);
  const ClosestPoints c = closestPoints(Shape::box(Vec3::Zero(), Mat3::Identity(), half),
                                        Shape::box(Vec3(2, 0, 0), Mat3::Identity(), half));
  EXPECT_NEAR(c.distance, 1.0, 1e-12);
  EXPECT_LT((c.normal - Vec3(1, 0, 0)).norm(), 1e-12);
  EXPECT_NEAR(c.p1.x(), 0.5, 1e-12);
  EXPECT_NEAR(c.p2.x(), 1.5, 1e-12);
}

TEST(ClosestPoints, CapsuleAgainstSegmentFormula)
{
  // parallel capsules: distance between the axes minus both radii
  const ClosestPoints c = closestPoints(Shape::capsule(Vec3(0, 0, 0), Vec3(2, 0, 0), 0.3),
                                        Shape::capsule(Vec3(1, 1.5, 0), Vec3(4, 1.5, 0), 0.2));
  EXPECT_NEAR(c.distance, 1.0, 1e-12);
  EXPECT_NEAR(c.normal.y(), 1.0, 1e-12);
}

TEST(ClosestPoints, PenetrationIsFlagged)
{
  const ClosestPoints s = closestPoints(Shape::sphere(Vec3::Zero(), 1.0), Shape::sphere(Vec3(1.5, 0, 0), 1.0));
  EXPECT_TRUE(s.penetrating);
  EXPECT_LE(s.distance, 0.0);
  const Vec3 half(0.5, 0.5, 0.5);
  const ClosestPoints b = closestPoints(Shape::box(Vec3::Zero(), Mat3::Identity(), half),
                                        Shape::box(Vec3(0.6, 0.2, 0.1), Mat3::Identity(), half));
  EXPECT_TRUE(b.penetrating);
}

TEST(ClosestPoints, MatchesSurfaceSampling)
{
  std::mt19937 rng(11);
  int checked = 0;
  while (checked < 12) {
    const Shape a = randomShape(rng, Vec3::Zero());
    const Shape b = randomShape(rng, randomVec(rng, 1.0).normalized() * uniform(rng, 1.6, 2.8));
    const ClosestPoints c = closestPoints(a, b);
    if (c.distance < 0.1) continue;
    ++checked;
    const double sampled = bruteForceDistance(sampleSurface(a), sampleSurface(b));
    // samples lie on the surfaces, so they can only overestimate the distance
    EXPECT_LE(c.distance, sampled + 1e-9);
    EXPECT_NEAR(c.distance, sampled, 1e-3) << shapeKindName(a.kind) << "/" << shapeKindName(b.kind);
    EXPECT_NEAR((c.p2 - c.p1).norm(), c.distance, 1e-9);
    const ClosestPoints back = closestPoints(b, a);
    EXPECT_NEAR(back.distance, c.distance, 1e-9);
  }
}
