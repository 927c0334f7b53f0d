#include <cmath>
#include <random>
#include <type_traits>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "walkex/driving.hpp"
#include "walkex/estimator.hpp"

using namespace walkex;
using walkex::testing::uniform;

namespace {

const RobotModel& model()
{
  static const RobotModel m = RobotModel::defaultModel();
  return m;
}

Vec3 legJoints(LegId leg, double abad, double flexion)
{
  const Leg& l = model().leg(leg);
  auto pick = [](const Cylinder& c, double s) { return c.jointMin() + s * (c.jointMax() - c.jointMin()); };
  return Vec3(pick(l.cylinders[0], abad), pick(l.cylinders[1], flexion), 0.0);
}

std::array<Vec3, 4> midStance()
{
  std::array<Vec3, 4> j;
  for (int i = 0; i < 4; ++i) j[i] = legJoints(kLegIds[i], 0.5, 0.5);
  return j;
}

WheelGeometry randomGeometry(std::mt19937& rng)
{
  std::array<Vec3, 4> j;
  for (int i = 0; i < 4; ++i) j[i] = legJoints(kLegIds[i], uniform(rng, 0.0, 1.0), uniform(rng, 0.0, 1.0));
  WheelGeometry g = WheelGeometry::fromModel(model(), j);
  g.xBaseline = uniform(rng, rearAxleX(g) + 0.2, frontAxleX(g) - 0.2);
  return g;
}

// Spread of the pairwise intersections of the wheel axle lines, in extended precision so that
// nearly parallel axles (distant centres) do not dominate the result.
double icrSpread(const WheelGeometry& g, const std::array<double, 4>& angles)
{
  using Ld = long double;
  std::vector<std::array<Ld, 2>> points;
  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) {
      const Ld dix = -std::sin(static_cast<Ld>(angles[i])), diy = std::cos(static_cast<Ld>(angles[i]));
      const Ld djx = -std::sin(static_cast<Ld>(angles[j])), djy = std::cos(static_cast<Ld>(angles[j]));
      const Ld det = -dix * djy + diy * djx;
      if (std::abs(det) < 1e-12L) continue;
      const Ld bx = static_cast<Ld>(g.positions[j].x()) - g.positions[i].x();
      const Ld by = static_cast<Ld>(g.positions[j].y()) - g.positions[i].y();
      const Ld s = (-bx * djy + by * djx) / det;
      points.push_back({g.positions[i].x() + s * dix, g.positions[i].y() + s * diy});
    }
  }
  Ld spread = 0.0L;
  for (const auto& p : points) {
    for (const auto& q : points) spread = std::max(spread, std::hypot(p[0] - q[0], p[1] - q[1]));
  }
  return static_cast<double>(spread);
}

}  // namespace

TEST(Steering, ZeroAngleIsStraightInEveryMode)
{
  const WheelGeometry g = WheelGeometry::fromModel(model(), midStance());
  for (SteeringMode m : {SteeringMode::Crab, SteeringMode::Front, SteeringMode::Rear, SteeringMode::FourWheel}) {
    const SteeringResult r = steeringAngles({m, 0.0, 1.0}, g);
    for (double a : r.angles) EXPECT_EQ(a, 0.0);
    EXPECT_FALSE(r.icr.has_value());
  }
}

TEST(Steering, CrabSetsIdenticalAngles)
{
  const WheelGeometry g = WheelGeometry::fromModel(model(), midStance());
  const SteeringResult r = steeringAngles({SteeringMode::Crab, 0.3, 0.0}, g);
  for (double a : r.angles) EXPECT_DOUBLE_EQ(a, 0.3);
  EXPECT_FALSE(r.limitClamp);
}

TEST(Steering, FrontModeKeepsRearWheelsStraight)
{
  const WheelGeometry g = WheelGeometry::fromModel(model(), midStance());
  const SteeringResult r = steeringAngles({SteeringMode::Front, 0.2, 0.0}, g);
  EXPECT_EQ(r.angles[legIndex(LegId::LH)], 0.0);
  EXPECT_EQ(r.angles[legIndex(LegId::RH)], 0.0);
  EXPECT_GT(r.angles[legIndex(LegId::LF)], r.angles[legIndex(LegId::RF)]);  // inner wheel steers more
}

TEST(Steering, AxleLinesMeetInOnePoint)
{
  std::mt19937 rng(5);
  const SteeringMode modes[3] = {SteeringMode::Front, SteeringMode::Rear, SteeringMode::FourWheel};
  double worst = 0.0;
  int clamped = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const WheelGeometry g = randomGeometry(rng);
    const SteeringMode mode = modes[trial % 3];
    const double angle = (trial % 2 ? 1.0 : -1.0) * uniform(rng, 0.02, 0.9);
    const SteeringResult r = steeringAngles({mode, angle, 0.0}, g);
    ASSERT_TRUE(r.icr.has_value());
    worst = std::max(worst, icrSpread(g, r.angles));
    for (int i = 0; i < 4; ++i) {
      EXPECT_LE(r.angles[i], g.limitMax[i] + 1e-12);
      EXPECT_GE(r.angles[i], g.limitMin[i] - 1e-12);
    }
    clamped += r.limitClamp;
  }
  EXPECT_LT(worst, 1e-9);
  EXPECT_GT(clamped, 0);
}

TEST(Steering, ClampPushesCentreOutward)
{
  const WheelGeometry g = WheelGeometry::fromModel(model(), midStance());
  const SteeringResult r = steeringAngles({SteeringMode::FourWheel, 1.4, 0.0}, g);
  EXPECT_TRUE(r.limitClamp);
  EXPECT_NEAR(r.icr->y(), minimumTurnOffset(g, g.xBaseline), 1e-12);
  double maxRatio = 0.0;
  for (int i = 0; i < 4; ++i) maxRatio = std::max(maxRatio, r.angles[i] / g.limitMax[i]);
  EXPECT_NEAR(maxRatio, 1.0, 1e-9);  // one wheel sits on its limit
}

TEST(Baseline, SymmetricStanceGivesMidpoint)
{
  WheelGeometry g;
  g.positions = {Vec2(1.5, -1.2), Vec2(1.5, 1.2), Vec2(-1.5, 1.2), Vec2(-1.5, -1.2)};
  const BaselineOptimum opt = optimizeBaseline(g);
  EXPECT_NEAR(opt.xBaseline, 0.0, 1e-4);
  EXPECT_NEAR(opt.yMin, 1.2 + 1.5 / std::tan(0.6), 1e-9);
}

TEST(Baseline, MatchesDenseGrid)
{
  std::mt19937 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    WheelGeometry g = randomGeometry(rng);
    for (int i = 0; i < 4; ++i) {
      g.limitMax[i] = uniform(rng, 0.2, 1.0);
      g.limitMin[i] = -uniform(rng, 0.2, 1.0);
    }
    const BaselineOptimum opt = optimizeBaseline(g);
    double lo = 1e9, hi = -1e9;
    for (const Vec2& p : g.positions) {
      lo = std::min(lo, p.x());
      hi = std::max(hi, p.x());
    }
    const int n = 10000;
    double best = 1e9, bestX = 0.0;
    for (int k = 0; k < n; ++k) {
      const double x = lo + (hi - lo) * k / (n - 1);
      const double y = minimumTurnOffset(g, x);
      if (y < best) {
        best = y;
        bestX = x;
      }
    }
    const double h = (hi - lo) / (n - 1);
    EXPECT_LE(opt.yMin, best + 1e-12);
    EXPECT_LE(best - opt.yMin, 10.0 * h);
    EXPECT_NEAR(opt.xBaseline, bestX, 2.0 * h);
  }
}

TEST(Baseline, WiderLimitsNeverWidenTheTurn)
{
  std::mt19937 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    WheelGeometry g = randomGeometry(rng);
    double prev = std::numeric_limits<double>::infinity();
    for (double lim = 0.1; lim < 1.3; lim += 0.05) {
      g.limitMin.fill(-lim);
      g.limitMax.fill(lim);
      const double y = optimizeBaseline(g).yMin;
      EXPECT_LE(y, prev + 1e-12);
      prev = y;
    }
  }
}

TEST(Baseline, FourWheelBeatsSingleAxle)
{
  std::mt19937 rng(33);
  for (int trial = 0; trial < 100; ++trial) {
    const WheelGeometry g = randomGeometry(rng);
    const double y = optimizeBaseline(g).yMin;
    EXPECT_LE(y, minimumTurnOffset(g, rearAxleX(g)) + 1e-12);
    EXPECT_LE(y, minimumTurnOffset(g, frontAxleX(g)) + 1e-12);
  }
}

TEST(Baseline, SwungFrontLegsTurnTighter)
{
  std::array<Vec3, 4> zero;
  for (int i = 0; i < 4; ++i) {
    zero[i] = legJoints(kLegIds[i], 0.5, 0.5);
    zero[i](0) = 0.0;
  }
  std::array<Vec3, 4> swung = zero;
  // both front wheels move to the right, away from a left-turn centre
  const double abad = -0.15;
  swung[legIndex(LegId::RF)](0) = abad;
  swung[legIndex(LegId::LF)](0) = abad;
  const WheelGeometry g0 = WheelGeometry::fromModel(model(), zero);
  const WheelGeometry g1 = WheelGeometry::fromModel(model(), swung);
  ASSERT_LT(g1.positions[legIndex(LegId::LF)].y(), g0.positions[legIndex(LegId::LF)].y());
  EXPECT_LT(optimizeBaseline(g1).yMin, optimizeBaseline(g0).yMin - 1e-3);
}

TEST(BaseVelocity, NoErrorLeavesCommandAtFeedForward)
{
  BaseVelocityController c(0.45);
  const double cmd = c.update(Vec3(0.5, 0.0, 0.0), Vec3::UnitX(), 0.5, 0.01);
  EXPECT_DOUBLE_EQ(cmd, 0.5 / 0.45);
  EXPECT_EQ(c.integral(), 0.0);
}

TEST(BaseVelocity, StepResponseHasNoSteadyStateError)
{
  const double rho = 0.45, lag = 0.3, dt = 0.01, slipRatio = 0.93;
  BaseVelocityController c(rho, {1.0, 0.8, 1.0});
  double wheelRate = 0.0;
  double speed = 0.0;
  const Vec3 heading = Vec3(1.0, 1.0, 0.0).normalized();
  for (int k = 0; k < 1000; ++k) {
    const double cmd = c.update(speed * heading, heading, 0.5, dt);
    wheelRate += dt / lag * (cmd - wheelRate);
    speed = slipRatio * rho * wheelRate;
  }
  EXPECT_NEAR(speed, 0.5, 1e-3);
}

TEST(BaseVelocity, FeedsBackOnlyTheEstimatedVelocity)
{
  using Update = decltype(&BaseVelocityController::update);
  static_assert(std::is_invocable_v<Update, BaseVelocityController&, Vec3, Vec3, double, double>);
  static_assert(!std::is_invocable_v<Update, BaseVelocityController&, SensorFrame, Vec3, double, double>);
  static_assert(!std::is_invocable_v<Update, BaseVelocityController&, std::array<double, 4>, Vec3, double, double>);
  SUCCEED();
}
