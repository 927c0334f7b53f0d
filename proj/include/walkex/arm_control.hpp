#pragma once

#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "walkex/collision.hpp"
#include "walkex/hqp.hpp"
#include "walkex/keyvalue.hpp"
#include "walkex/model.hpp"
#include "walkex/trajectory.hpp"

namespace walkex {

/// Convex primitive rigidly attached to an arm link; link -1 is the arm base (chassis).
struct CollisionBody
{
  std::string name;
  int link = -1;
  Shape shape;  // in the link frame
};

struct CollisionWorld
{
  std::vector<CollisionBody> bodies;
  std::vector<std::pair<int, int>> pairs;  // body indices
  double influenceDistance = 0.5;  // d_i [m]
  double safetyDistance = 0.1;     // d_s [m]
  double damping = 0.5;            // xi [m/s]

  /// Cabin box on the turn link, chassis box on the base, capsules on the boom and dipper, box on the shovel.
  static CollisionWorld defaults();
  void validate() const;
  int bodyIndex(const std::string& name) const;
};

/// Last valid normal per pair, used while a pair penetrates.
using CollisionMemory = std::vector<Vec3>;

struct CollisionContact
{
  int pair = 0;
  ClosestPoints points;
  Eigen::RowVectorXd jacobian;  // n^T (J_p1 - J_p2), approach velocity of the first body
  double allowedVelocity = 0.0;  // xi (d - d_s) / (d_i - d_s), 0 while penetrating
};

/// Pairs closer than d_i for the first q.size() joints.
std::vector<CollisionContact> evaluateCollisions(const RobotModel& model, const CollisionWorld& world,
                                                 const Eigen::VectorXd& q, CollisionMemory* memory = nullptr);

/// Minimum distance over all pairs (no influence cut-off).
double minimumClearance(const RobotModel& model, const CollisionWorld& world, const Eigen::VectorXd& q);

struct ArmControlConfig
{
  double dt = 0.01;            // limit-task horizon, one control period
  double dampingGain = 1.0;    // k_p of the joint damping task [1/s]
  double frictionEpsilon = 1e-3;
  CollisionWorld collisions = CollisionWorld::defaults();
  TrackingGains tracking;

  void validate() const;
};

/// kind = arm, schema_version = 1; unknown keys raise ConfigError with the key path.
ArmControlConfig parseArmConfig(const KeyValueDoc& doc);

/// Row A E(q) with A_A for extending and -A_B for retracting pistons (sign of E(q) v).
Eigen::RowVectorXd flowRow(const RobotModel& model, const Eigen::VectorXd& q, const Eigen::VectorXd& velocity);

/// True pump flow of joint velocities v.
double pumpFlow(const RobotModel& model, const Eigen::VectorXd& q, const Eigen::VectorXd& v);

/// Joint velocity bounds from the piston velocity limits through E(q).
std::pair<Eigen::VectorXd, Eigen::VectorXd> jointVelocityLimits(const RobotModel& model, const Eigen::VectorXd& q);
/// Joint force bounds E(q) [tau_p_min, tau_p_max], ordered per element.
std::pair<Eigen::VectorXd, Eigen::VectorXd> jointForceLimits(const RobotModel& model, const Eigen::VectorXd& q);

struct IdTarget
{
  Eigen::Vector4d force = Eigen::Vector4d::Zero();         // f_t in (x_t, z_t, theta_t, psi_t)
  Eigen::Vector4d acceleration = Eigen::Vector4d::Zero();  // task-space acceleration, same order
};

/**
 * Inverse-dynamics stack over x = [u_dot; tau] for the five force-controlled
 * joints, in this order: equations of motion, pump flow, force limits,
 * velocity limits, position limits, self collision, shovel orientation
 * (theta_t, psi_t), shovel position (x_t, z_t), joint damping.
 */
std::vector<Task> buildIdTasks(const RobotModel& model, const ArmControlConfig& config, const Eigen::VectorXd& q,
                               const Eigen::VectorXd& u, const IdTarget& target,
                               const std::vector<CollisionContact>& contacts);

/**
 * Inverse-kinematics stack over u_d for all seven joints: pump flow, velocity
 * limits, position limits, self collision, orientation, position, minimum
 * norm.
 */
std::vector<Task> buildIkTasks(const RobotModel& model, const ArmControlConfig& config, const Eigen::VectorXd& q,
                               const Eigen::VectorXd& u, const Twist& desired,
                               const std::vector<CollisionContact>& contacts);

struct ArmCommandId
{
  Eigen::VectorXd acceleration;
  Eigen::VectorXd force;
  std::vector<Task> tasks;
  HqpSolution solution;
};

struct ArmCommandIk
{
  Eigen::VectorXd velocity;
  std::vector<Task> tasks;
  HqpSolution solution;
  std::vector<CollisionContact> contacts;
};

/**
 * Builds and solves the stack. The flow row depends on the direction of the
 * solved piston velocities; while the solution's direction pattern differs
 * from every row already present, its row is added and the stack re-solved.
 */
ArmCommandId solveArmId(const RobotModel& model, const ArmControlConfig& config, const Eigen::VectorXd& q,
                        const Eigen::VectorXd& u, const IdTarget& target, CollisionMemory* memory = nullptr);
ArmCommandIk solveArmIk(const RobotModel& model, const ArmControlConfig& config, const Eigen::VectorXd& q,
                        const Eigen::VectorXd& u, const Twist& desired, CollisionMemory* memory = nullptr);

/// Shovel pose in the arm base frame.
Pose shovelPose(const RobotModel& model, const Eigen::VectorXd& q);

/// One CSV row per tick: time, solution vector, per-task residual and active row count.
class CommandLog
{
 public:
  explicit CommandLog(std::ostream& out) : out_(out) {}
  void write(double time, const std::vector<Task>& tasks, const HqpSolution& solution);

 private:
  std::ostream& out_;
  bool headerWritten_ = false;
};

}  // namespace walkex
