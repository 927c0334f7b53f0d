#pragma once

#include <string>
#include <vector>

#include "walkex/keyvalue.hpp"
#include "walkex/lie.hpp"

namespace walkex {

struct Pose
{
  Vec3 position = Vec3::Zero();
  Rotation rotation;  // body -> reference
};

/// Linear and angular velocity, both in the reference frame.
struct Twist
{
  Vec3 linear = Vec3::Zero();
  Vec3 angular = Vec3::Zero();
};

struct HermiteKnot
{
  double time = 0.0;
  Pose pose;
  Twist twist;
};

enum class EndPolicy { Throw, Clamp };

/**
 * Cubic Hermite interpolation of position, and of orientation in the tangent
 * space of the segment's first knot: R(t) = exp(phi(t)) R_k with phi a cubic
 * Hermite curve from 0 to log(R_k+1 R_k^-1).
 */
class HermiteSpline
{
 public:
  HermiteSpline() = default;
  explicit HermiteSpline(std::vector<HermiteKnot> knots, EndPolicy policy = EndPolicy::Throw);

  Pose pose(double t) const;
  Twist twist(double t) const;
  double start() const { return knots_.front().time; }
  double end() const { return knots_.back().time; }
  const std::vector<HermiteKnot>& knots() const { return knots_; }
  EndPolicy policy() const { return policy_; }

 private:
  /// Segment index and time clamped into the domain; OutOfDomain under EndPolicy::Throw.
  int locate(double& t) const;

  std::vector<HermiteKnot> knots_;
  EndPolicy policy_ = EndPolicy::Throw;
};

struct PidGains
{
  double kp = 0.0;
  double ki = 0.0;
  double kd = 0.0;
  double outputLimit = 1.0;  // integral term bounded by this (anti-windup)
};

struct TrackingGains
{
  PidGains position{2.0, 0.5, 0.0, 0.1};
  PidGains orientation{2.0, 0.5, 0.0, 0.1};
};

/// desired twist = spline twist + PID(pose error); orientation error is boxminus(R_traj, R).
class SplineTracker
{
 public:
  explicit SplineTracker(const TrackingGains& gains = {});

  Twist update(double t, const HermiteSpline& spline, const Pose& current, double dt);
  void reset();
  const Twist& integral() const { return integral_; }

 private:
  TrackingGains gains_;
  Twist integral_;   // integrated error
  Twist previous_;   // last error, for the derivative
  bool first_ = true;
};

/// kind = knots, schema_version = 1, end_policy, knot.<i>.{t, position, rotation, velocity, angular_velocity}.
HermiteSpline parseKnots(const KeyValueDoc& doc);

}  // namespace walkex
