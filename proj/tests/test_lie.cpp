#include <random>

#include <gtest/gtest.h>

#include "walkex/lie.hpp"

using namespace walkex;

namespace {

Mat3 seriesExp(const Vec3& phi)
{
  const Mat3 k = skew(phi);
  Mat3 term = Mat3::Identity();
  Mat3 sum = Mat3::Identity();
  for (int n = 1; n < 20; ++n) {
    term = term * k / static_cast<double>(n);
    sum += term;
  }
  return sum;
}

Vec3 randomVec(std::mt19937& rng, double maxNorm)
{
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(u(rng), u(rng), u(rng));
  } while (v.norm() > 1.0);
  return v * maxNorm;
}

Rotation randomRotation(std::mt19937& rng) { return expMap(randomVec(rng, 3.1)); }

Mat3 numericGamma(const Vec3& phi, double h)
{
  Mat3 j;
  for (int i = 0; i < 3; ++i) {
    const Vec3 d = Vec3::Unit(i) * h;
    j.col(i) = (boxminus(expMap(phi + d), expMap(phi)) - boxminus(expMap(phi - d), expMap(phi))) / (2.0 * h);
  }
  return j;
}

}  // namespace

TEST(Lie, ExpOfZeroIsIdentity)
{
  EXPECT_LT((expMap(Vec3::Zero()).matrix() - Mat3::Identity()).norm(), 1e-15);
}

TEST(Lie, QuarterTurnAboutZ)
{
  const Vec3 v = rotate(expMap(Vec3(0, 0, M_PI / 2)), Vec3(1, 0, 0));
  EXPECT_LT((v - Vec3(0, 1, 0)).norm(), 1e-12);
}

TEST(Lie, ExpMatchesMatrixSeries)
{
  const Vec3 phi(0.3, -0.1, 0.2);
  EXPECT_LT((expMap(phi).matrix() - seriesExp(phi)).norm(), 1e-12);
}

TEST(Lie, SmallAngleBranchIsContinuous)
{
  for (double s : {1e-12, 1e-9, 5e-9, 2e-8}) {
    const Vec3 phi = Vec3(0.3, -0.5, 0.8).normalized() * s;
    EXPECT_LT((expMap(phi).matrix() - seriesExp(phi)).norm(), 1e-15);
    EXPECT_LT((logMap(expMap(phi)) - phi).norm(), 1e-20 + 1e-9 * s);
    EXPECT_LT((expJacobian(phi) * expJacobianInverse(phi) - Mat3::Identity()).norm(), 1e-14);
  }
}

TEST(Lie, GammaAtZeroIsIdentity) { EXPECT_LT((expJacobian(Vec3::Zero()) - Mat3::Identity()).norm(), 1e-15); }

TEST(Lie, GammaMatchesFiniteDifferenceAboutZ)
{
  const Vec3 phi(0, 0, 0.5);
  EXPECT_LT((expJacobian(phi) - numericGamma(phi, 1e-6)).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(Lie, GammaFiniteDifferenceSweep)
{
  std::mt19937 rng(7);
  for (int t = 0; t < 100; ++t) {
    const Vec3 phi = randomVec(rng, 3.0);
    EXPECT_LT((expJacobian(phi) - numericGamma(phi, 1e-6)).cwiseAbs().maxCoeff(), 1e-5) << phi.transpose();
  }
}

TEST(Lie, GammaKeepsAxis)
{
  std::mt19937 rng(3);
  for (int t = 0; t < 20; ++t) {
    const Vec3 phi = randomVec(rng, 3.0);
    EXPECT_LT((expJacobian(phi) * phi - phi).norm(), 1e-12);
    EXPECT_LT((expJacobianInverse(phi) * expJacobian(phi) - Mat3::Identity()).norm(), 1e-10);
  }
}

TEST(Lie, BoxplusIdentities)
{
  std::mt19937 rng(11);
  const Rotation r = randomRotation(rng);
  EXPECT_LT((boxplus(r, Vec3::Zero()).matrix() - r.matrix()).norm(), 1e-15);
  EXPECT_LT(boxminus(r, r).norm(), 1e-15);
}

TEST(Lie, BoxplusRoundTripSweep)
{
  std::mt19937 rng(1);
  for (int t = 0; t < 1000; ++t) {
    const Rotation r = randomRotation(rng);
    const Vec3 d = randomVec(rng, 3.0);
    EXPECT_LT((boxminus(boxplus(r, d), r) - d).norm(), 1e-9);
  }
}

TEST(Lie, SkewIsCrossProduct)
{
  EXPECT_EQ(skew(Vec3(1, 0, 0)) * Vec3(0, 1, 0), Vec3(0, 0, 1));
  std::mt19937 rng(5);
  for (int t = 0; t < 20; ++t) {
    const Vec3 a = randomVec(rng, 2.0);
    const Vec3 b = randomVec(rng, 2.0);
    EXPECT_LT((skew(a) * b - a.cross(b)).norm(), 1e-15);
  }
}

TEST(Lie, RotatePreservesNorm)
{
  EXPECT_EQ(rotate(Rotation::identity(), Vec3(1, 2, 3)), Vec3(1, 2, 3));
  std::mt19937 rng(9);
  for (int t = 0; t < 1000; ++t) {
    const Vec3 v = randomVec(rng, 10.0);
    EXPECT_NEAR(rotate(randomRotation(rng), v).norm(), v.norm(), 1e-12);
  }
}

TEST(Lie, CompositionInvariants)
{
  std::mt19937 rng(13);
  for (int t = 0; t < 200; ++t) {
    const Rotation a = randomRotation(rng);
    const Rotation b = randomRotation(rng);
    const Rotation c = randomRotation(rng);
    EXPECT_LT((((a * b) * c).matrix() - (a * (b * c)).matrix()).norm(), 1e-12);
    EXPECT_LT(((a * a.inverse()).matrix() - Mat3::Identity()).norm(), 1e-12);
    EXPECT_NEAR((a * b).quaternion().norm(), 1.0, 1e-12);
  }
}

TEST(Lie, LogIsInverseOfExpBelowPi)
{
  std::mt19937 rng(17);
  for (int t = 0; t < 200; ++t) {
    const Vec3 phi = randomVec(rng, 3.1);
    EXPECT_LT((logMap(expMap(phi)) - phi).norm(), 1e-10);
  }
}
