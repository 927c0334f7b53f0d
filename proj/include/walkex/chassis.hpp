#pragma once

#include <array>
#include <vector>

#include "walkex/lie.hpp"
#include "walkex/model.hpp"

namespace walkex {

struct ChassisGains
{
  double kpHeight = 2e5;  // [N/m]
  double kdHeight = 5e4;  // [N s/m]
  double kpRoll = 2e5;    // [N m/rad]
  double kdRoll = 5e4;
  double kpPitch = 2e5;
  double kdPitch = 5e4;

  void validate() const;
};

/// Height of the base above the terrain plane and roll/pitch w.r.t. gravity (ZYX, zero yaw).
struct ChassisTarget
{
  double height = 1.7;
  double roll = 0.0;
  double pitch = 0.0;
  ChassisGains gains;
};

struct ChassisState
{
  double height = 0.0;
  double roll = 0.0;
  double pitch = 0.0;
  double heightRate = 0.0;
  double rollRate = 0.0;
  double pitchRate = 0.0;

  Mat3 orientation() const;  // base -> inertial
};

/// (F_z, tau_roll, tau_pitch) the four normal forces must supply, in the base frame.
using VerticalWrench = Vec3;

/**
 * Normal-force wrench that holds the machine against gravity. Lateral
 * gravity components are reacted by the wheels at contactHeight (base z of
 * the contacts), which adds to the roll and pitch moments.
 */
VerticalWrench gravityFeedForward(const RobotModel& model, const Mat3& baseOrientation, double contactHeight);

/// Feed-forward plus PD per channel.
VerticalWrench virtualModel(const ChassisState& state, const ChassisTarget& target, const VerticalWrench& feedForward);

enum class DistributionCost { Equal, Minimal };

struct ForceDistribution
{
  std::array<double, 4> contact = {0.0, 0.0, 0.0, 0.0};   // f_i along base z [N]
  std::array<double, 4> cylinder = {0.0, 0.0, 0.0, 0.0};  // flexion cylinder forces [N]
  std::array<bool, 4> saturated = {false, false, false, false};
};

/// Normal forces at the ground-plane contact positions (base frame). Infeasible if no bounded solution exists.
ForceDistribution distributeForces(const VerticalWrench& wrench, const std::array<Vec2, 4>& contacts, double fMin,
                                   double fMax, DistributionCost cost = DistributionCost::Equal);

/**
 * Static flexion cylinder force per leg. The wheel pushes the ground with
 * -f_i e_z; the cylinder force is the generalized force of that push on the
 * flexion piston, F = (J1 e_flexion J2)^T (-f_i e_z).
 */
void forcesToCylinders(ForceDistribution& distribution, const std::array<Vec3, 4>& legJoints, const RobotModel& model);

struct ChassisSimConfig
{
  Vec3 terrainNormal = Vec3::UnitZ();  // terrain plane through the origin
  std::array<double, 4> abad = {0.0, 0.0, 0.0, 0.0};
  double heightDamping = 1e5;  // [N s/m], first-order response to the wrench error
  double rotationDamping = 1e5;
  double dt = 0.01;
  double fMin = 2000.0;
  double fMaxFraction = 0.6;   // of the machine weight
  DistributionCost cost = DistributionCost::Equal;
};

struct ChassisTick
{
  double time = 0.0;
  ChassisState state;
  std::array<Vec3, 4> legJoints;
  VerticalWrench wrench = VerticalWrench::Zero();
  ForceDistribution forces;
};

/**
 * Quasi-static chassis simulation: no inertia, the pose moves with the
 * wrench error through a viscous first-order law, the wheels stay on the
 * terrain plane and the flexion joints follow from the pose.
 */
class ChassisSim
{
 public:
  ChassisSim(const RobotModel& model, const ChassisSimConfig& config, const ChassisState& initial);

  const ChassisTick& step(const ChassisTarget& target);
  const ChassisState& state() const { return state_; }
  double time() const { return time_; }

  /// Flexion angles putting each wheel on the terrain plane for a pose; OutOfRange if a leg cannot reach.
  std::array<Vec3, 4> solveLegs(const ChassisState& pose) const;

 private:
  const RobotModel& model_;
  ChassisSimConfig config_;
  ChassisState state_;
  double time_ = 0.0;
  ChassisTick last_;
};

}  // namespace walkex
