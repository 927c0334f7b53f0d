#include "walkex/driving.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "walkex/errors.hpp"

namespace walkex {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Mirror y so a right turn can be handled as a left turn.
WheelGeometry mirrored(const WheelGeometry& g)
{
  WheelGeometry m = g;
  for (int i = 0; i < 4; ++i) {
    m.positions[i].y() = -g.positions[i].y();
    m.limitMin[i] = -g.limitMax[i];
    m.limitMax[i] = -g.limitMin[i];
  }
  return m;
}

// 1 / tan of the usable limit on the side the wheel must steer to; 0 slope is no constraint.
double inverseSlope(const WheelGeometry& g, int i, bool ahead)
{
  const double lim = ahead ? g.limitMax[i] : -g.limitMin[i];
  if (lim <= 0.0) return kInf;
  if (lim >= 0.5 * M_PI) return 0.0;
  return 1.0 / std::tan(lim);
}

}  // namespace

const char* steeringModeName(SteeringMode mode)
{
  switch (mode) {
    case SteeringMode::Crab: return "crab";
    case SteeringMode::Front: return "front";
    case SteeringMode::Rear: return "rear";
    case SteeringMode::FourWheel: return "four_wheel";
  }
  return "?";
}

SteeringMode parseSteeringMode(const std::string& name)
{
  for (SteeringMode m : {SteeringMode::Crab, SteeringMode::Front, SteeringMode::Rear, SteeringMode::FourWheel}) {
    if (name == steeringModeName(m)) return m;
  }
  throw ConfigError("", "unknown steering mode '" + name + "'");
}

WheelGeometry WheelGeometry::fromModel(const RobotModel& model, const std::array<Vec3, 4>& legJoints)
{
  WheelGeometry g;
  for (int i = 0; i < 4; ++i) {
    const LegId leg = kLegIds[i];
    const Vec3 s = legContactVector(model, leg, legJoints[i]);
    g.positions[i] = s.head<2>();
    const Cylinder& steer = model.leg(leg).cylinders[2];
    g.limitMin[i] = steer.jointMin();
    g.limitMax[i] = steer.jointMax();
  }
  return g;
}

double frontAxleX(const WheelGeometry& g)
{
  return 0.5 * (g.positions[legIndex(LegId::RF)].x() + g.positions[legIndex(LegId::LF)].x());
}

double rearAxleX(const WheelGeometry& g)
{
  return 0.5 * (g.positions[legIndex(LegId::LH)].x() + g.positions[legIndex(LegId::RH)].x());
}

double ackermannAngle(const Vec2& wheel, const Vec2& icr)
{
  return std::atan((wheel.x() - icr.x()) / (icr.y() - wheel.y()));
}

double minimumTurnOffset(const WheelGeometry& g, double xBaseline)
{
  double y = -kInf;
  for (int i = 0; i < 4; ++i) {
    const double dx = g.positions[i].x() - xBaseline;
    const double term = dx == 0.0 ? 0.0 : std::abs(dx) * inverseSlope(g, i, dx > 0.0);
    y = std::max(y, g.positions[i].y() + term);
  }
  return y;
}

SteeringResult steeringAngles(const SteeringCommand& command, const WheelGeometry& g)
{
  SteeringResult out;
  if (!std::isfinite(command.angle)) throw OutOfRange("steering angle is not finite");
  if (command.angle == 0.0) return out;

  if (command.mode == SteeringMode::Crab) {
    double lo = -kInf, hi = kInf;
    for (int i = 0; i < 4; ++i) {
      lo = std::max(lo, g.limitMin[i]);
      hi = std::min(hi, g.limitMax[i]);
    }
    const double a = std::clamp(command.angle, lo, hi);
    out.limitClamp = a != command.angle;
    out.angles.fill(a);
    return out;
  }

  double xBase = g.xBaseline;
  double xRef = frontAxleX(g);
  if (command.mode == SteeringMode::Front) {
    xBase = rearAxleX(g);
  } else if (command.mode == SteeringMode::Rear) {
    xBase = frontAxleX(g);
    xRef = rearAxleX(g);
  }
  if (xRef == xBase) throw OutOfRange("steering reference axle lies on the baseline");
  if (std::abs(command.angle) >= 0.5 * M_PI) throw OutOfRange("steering angle must be below 90 degrees");

  double yc = (xRef - xBase) / std::tan(command.angle);
  if (yc > 0.0) {
    const double bound = minimumTurnOffset(g, xBase);
    if (yc < bound) {
      yc = bound;
      out.limitClamp = true;
    }
  } else {
    const double bound = -minimumTurnOffset(mirrored(g), xBase);
    if (yc > bound) {
      yc = bound;
      out.limitClamp = true;
    }
  }
  if (!std::isfinite(yc)) throw OutOfRange("no centre of rotation satisfies the steering limits");
  const Vec2 icr(xBase, yc);
  for (int i = 0; i < 4; ++i) out.angles[i] = ackermannAngle(g.positions[i], icr);
  out.icr = icr;
  return out;
}

BaselineOptimum optimizeBaseline(const WheelGeometry& g, double tolerance)
{
  double a = kInf, b = -kInf;
  for (const Vec2& p : g.positions) {
    a = std::min(a, p.x());
    b = std::max(b, p.x());
  }
  auto f = [&](double x) { return minimumTurnOffset(g, x); };

  const double ratio = 0.5 * (std::sqrt(5.0) - 1.0);
  double lo = a, hi = b;
  double x1 = hi - ratio * (hi - lo), x2 = lo + ratio * (hi - lo);
  double f1 = f(x1), f2 = f(x2);
  while (hi - lo > tolerance) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - ratio * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + ratio * (hi - lo);
      f2 = f(x2);
    }
  }

  // The objective is a max of V-shaped lines: its minimum sits on a kink or a crossing.
  std::vector<double> candidates = {a, b, lo, hi, 0.5 * (lo + hi)};
  struct Line { double c0, c1; };  // y = c0 + c1 x
  std::vector<Line> lines;
  for (int i = 0; i < 4; ++i) {
    const Vec2& p = g.positions[i];
    candidates.push_back(p.x());
    const double sAhead = inverseSlope(g, i, true), sBehind = inverseSlope(g, i, false);
    if (std::isfinite(sAhead)) lines.push_back({p.y() + sAhead * p.x(), -sAhead});
    if (std::isfinite(sBehind)) lines.push_back({p.y() - sBehind * p.x(), sBehind});
  }
  for (std::size_t i = 0; i < lines.size(); ++i) {
    for (std::size_t j = i + 1; j < lines.size(); ++j) {
      const double ds = lines[i].c1 - lines[j].c1;
      if (ds != 0.0) candidates.push_back((lines[j].c0 - lines[i].c0) / ds);
    }
  }
  BaselineOptimum best{0.5 * (lo + hi), f(0.5 * (lo + hi))};
  for (double x : candidates) {
    if (!(x >= a && x <= b)) continue;
    const double v = f(x);
    if (v < best.yMin) best = {x, v};
  }
  return best;
}

BaseVelocityController::BaseVelocityController(double wheelRadius, const VelocityGains& gains)
    : wheelRadius_(wheelRadius), gains_(gains)
{
  if (!(wheelRadius > 0.0)) throw ConfigError("wheel_radius", "must be positive");
  if (gains.kp < 0.0 || gains.ki < 0.0 || gains.integralLimit < 0.0) throw ConfigError("gains", "must be >= 0");
}

double BaseVelocityController::update(const Vec3& estimatedVelocity, const Vec3& forward, double desiredSpeed,
                                      double dt)
{
  const double speed = estimatedVelocity.dot(forward.normalized());
  const double e = desiredSpeed - speed;
  integral_ = std::clamp(integral_ + gains_.ki * e * dt, -gains_.integralLimit, gains_.integralLimit);
  return (desiredSpeed + gains_.kp * e + integral_) / wheelRadius_;
}

}  // namespace walkex
