#pragma once

#include <array>
#include <optional>
#include <string>

#include "walkex/lie.hpp"
#include "walkex/model.hpp"

namespace walkex {

enum class SteeringMode { Crab, Front, Rear, FourWheel };

const char* steeringModeName(SteeringMode mode);
SteeringMode parseSteeringMode(const std::string& name);

/**
 * For the Ackermann modes the angle is that of a virtual wheel at the
 * midpoint of the steered axle (the front axle in four-wheel mode);
 * positive turns left.
 */
struct SteeringCommand
{
  SteeringMode mode = SteeringMode::Crab;
  double angle = 0.0;  // [rad]
  double speed = 0.0;  // [m/s]
};

/// Ground-plane wheel contacts in the base frame and the steering joint limits.
struct WheelGeometry
{
  std::array<Vec2, 4> positions;
  std::array<double, 4> limitMin = {-0.6, -0.6, -0.6, -0.6};
  std::array<double, 4> limitMax = {0.6, 0.6, 0.6, 0.6};
  double xBaseline = 0.0;

  /// Contacts from the leg joint angles, steering limits from the steering cylinders.
  static WheelGeometry fromModel(const RobotModel& model, const std::array<Vec3, 4>& legJoints);
};

struct SteeringResult
{
  std::array<double, 4> angles = {0.0, 0.0, 0.0, 0.0};
  bool limitClamp = false;
  std::optional<Vec2> icr;  // none for crab and straight driving
};

/// Front axle x (mean of RF, LF) and rear axle x (mean of LH, RH).
double frontAxleX(const WheelGeometry& geometry);
double rearAxleX(const WheelGeometry& geometry);

/// Ackermann angle of a wheel at p for a centre of rotation c: atan((x - x_c) / (y_c - y)).
double ackermannAngle(const Vec2& wheel, const Vec2& icr);

SteeringResult steeringAngles(const SteeringCommand& command, const WheelGeometry& geometry);

/// Smallest |y| of a left-turn centre on the baseline x = xBaseline that respects all limits.
double minimumTurnOffset(const WheelGeometry& geometry, double xBaseline);

struct BaselineOptimum
{
  double xBaseline = 0.0;
  double yMin = 0.0;
};

/// Golden-section search over the wheelbase span, polished on the breakpoints of the piecewise-linear objective.
BaselineOptimum optimizeBaseline(const WheelGeometry& geometry, double tolerance = 1e-4);

struct VelocityGains
{
  double kp = 1.0;
  double ki = 0.5;
  double integralLimit = 1.0;  // [m/s]
};

/**
 * Common wheel-rate command for the series-connected hub motors. Only the
 * estimated base velocity is fed back; the wheels have no encoders.
 */
class BaseVelocityController
{
 public:
  BaseVelocityController(double wheelRadius, const VelocityGains& gains = {});

  /// Wheel rate [rad/s] for all four wheels. forward is the chassis heading in the same frame as the velocity.
  double update(const Vec3& estimatedVelocity, const Vec3& forward, double desiredSpeed, double dt);
  void reset() { integral_ = 0.0; }
  double integral() const { return integral_; }

 private:
  double wheelRadius_;
  VelocityGains gains_;
  double integral_ = 0.0;
};

}  // namespace walkex
