#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "walkex/keyvalue.hpp"
#include "walkex/kinematic_chain.hpp"
#include "walkex/lie.hpp"

namespace walkex {

enum class LegId : int { RF = 0, LF = 1, LH = 2, RH = 3 };

inline constexpr std::array<LegId, 4> kLegIds = {LegId::RF, LegId::LF, LegId::LH, LegId::RH};

const char* legName(LegId leg);
inline int legIndex(LegId leg) { return static_cast<int>(leg); }

enum class CylinderKind { Linkage, Prismatic, Rotary };

/**
 * Piston <-> joint map of one actuated joint.
 *
 * Linkage: the cylinder closes a triangle with sides a, b around the joint
 * axis; L = lengthAtZero + beta and the included angle follows from the law
 * of cosines. Prismatic: q = beta. Rotary: constant ratio, q = nominal +
 * (beta - mid stroke) / ratio (slew drives and rotators).
 */
struct Cylinder
{
  CylinderKind kind = CylinderKind::Linkage;
  double a = 1.0;
  double b = 1.0;
  double lengthAtZero = 1.0;
  int direction = 1;
  double nominal = 0.0;  // joint value at mid stroke
  double ratio = 1.0;    // rotary only [m/rad]
  double strokeMin = 0.0;
  double strokeMax = 1.0;
  double areaA = 0.01;  // piston side [m^2]
  double areaB = 0.005; // rod side [m^2]
  double velocityMin = -0.3;
  double velocityMax = 0.3;
  double forceMin = -1e5;
  double forceMax = 1e5;

  double midStroke() const { return 0.5 * (strokeMin + strokeMax); }
  double jointAngle(double beta) const;
  double pistonPosition(double q) const;
  /// dq/dbeta
  double jointRate(double beta) const;
  /// dbeta/dq; SingularMapping if the moment arm is below 1e-6 m.
  double pistonRate(double q) const;
  double jointMin() const;
  double jointMax() const;
};

struct Leg
{
  Vec3 hipOffset = Vec3::Zero();
  double length = 1.0;
  double kingpinOffset = 0.0;
  std::array<Cylinder, 3> cylinders;  // abad, flexion, steering
};

struct ArmJoint
{
  std::string name;
  ChainJoint joint;
  LinkInertia link;
  Cylinder cylinder;
};

/// Number of force-controlled arm joints (turn, boom, dipper, telescope, bucket).
inline constexpr int kArmForceJoints = 5;
/// All arm joints including the two velocity-only rototilt joints.
inline constexpr int kArmJoints = 7;

/**
 * Machine description. Plain data plus the derived arm chain; immutable once
 * built by defaultModel(), fromDoc() or load().
 */
class RobotModel
{
 public:
  Vec3 gravity = Vec3(0.0, 0.0, -9.81);
  double wheelRadius = 0.45;
  double machineMass = 12000.0;
  Vec3 chassisCom = Vec3::Zero();
  Vec3 turnAxisOffset = Vec3(0.0, 0.0, 0.6);  // cabin origin relative to chassis base, along the turn axis
  std::array<Vec3, 2> gnssLeverArm = {Vec3::Zero(), Vec3::Zero()};
  double pumpFlowMax = 0.004;
  std::array<Leg, 4> legs;
  std::vector<ArmJoint> arm;
  Vec3 toolOffset = Vec3::Zero();  // shovel origin in the last link frame
  Eigen::VectorXd frictionViscous = Eigen::VectorXd::Zero(kArmForceJoints);
  Eigen::VectorXd frictionStatic = Eigen::VectorXd::Zero(kArmForceJoints);

  static RobotModel defaultModel();
  static RobotModel fromDoc(const KeyValueDoc& doc);
  static RobotModel load(const std::string& path);
  std::string toText() const;

  /// Throws ModelError on violated invariants; rebuilds the arm chain.
  void finalize();

  const Leg& leg(LegId id) const { return legs[legIndex(id)]; }
  const KinematicChain& chain() const { return chain_; }
  double weight() const { return machineMass * -gravity.z(); }

  Eigen::VectorXd armJointMin() const;
  Eigen::VectorXd armJointMax() const;

 private:
  KinematicChain chain_;
};

// ---- legs ----

/// Wheel center in the base frame.
Vec3 legWheelCenter(const RobotModel& model, LegId leg, const Vec3& alpha);
/// Base-frame vector to the ground contact: wheel center minus rho along the (base-frame) terrain normal.
Vec3 legContactVector(const RobotModel& model, LegId leg, const Vec3& alpha, const Vec3& normal = Vec3::UnitZ());
/// J1 = d s / d alpha (the normal term does not depend on alpha).
Mat3 legContactJacobian(const RobotModel& model, LegId leg, const Vec3& alpha);
/// Unit wheel forward direction in the base frame.
Vec3 legWheelForward(const RobotModel& model, LegId leg, const Vec3& alpha);

Vec3 legPistonToJoint(const RobotModel& model, LegId leg, const Vec3& beta);
Vec3 legJointToPiston(const RobotModel& model, LegId leg, const Vec3& alpha);
/// J2, diagonal.
Mat3 legPistonJacobian(const RobotModel& model, LegId leg, const Vec3& beta);
void checkLegLimits(const RobotModel& model, LegId leg, const Vec3& alpha);

// ---- arm ----

Eigen::VectorXd armPistonToJoint(const RobotModel& model, const Eigen::VectorXd& beta);
Eigen::VectorXd armJointToPiston(const RobotModel& model, const Eigen::VectorXd& q);
/// E(q) diagonal, one entry per element of q (first q.size() arm joints).
Eigen::VectorXd forceMapping(const RobotModel& model, const Eigen::VectorXd& q);
void checkArmLimits(const RobotModel& model, const Eigen::VectorXd& q);

struct ArmDynamics
{
  Eigen::MatrixXd M;
  Eigen::VectorXd b;
  Eigen::VectorXd g;
};

/// Dynamics of the five force-controlled joints; rototilt links are massless.
ArmDynamics armDynamics(const RobotModel& model, const Eigen::VectorXd& q, const Eigen::VectorXd& u);
/// Christoffel-based Coriolis matrix, C(q,u) u = b(q,u).
Eigen::MatrixXd coriolisMatrix(const RobotModel& model, const Eigen::VectorXd& q, const Eigen::VectorXd& u);
/// dM/dt along u.
Eigen::MatrixXd massMatrixRate(const RobotModel& model, const Eigen::VectorXd& q, const Eigen::VectorXd& u);
double armPotentialEnergy(const RobotModel& model, const Eigen::VectorXd& q);
double armKineticEnergy(const RobotModel& model, const Eigen::VectorXd& q, const Eigen::VectorXd& u);

struct ArmKinematics
{
  Mat3 rotation;    // shovel -> arm base
  Vec3 position;    // shovel origin in the arm base frame
  Eigen::MatrixXd jT;  // 3 x n
  Eigen::MatrixXd jR;  // 3 x n
  Eigen::Vector4d task;  // x_t, z_t (cabin frame), theta_t, psi_t
  Eigen::MatrixXd jTask; // 4 x n
  std::vector<FrameT<double>> frames;
};

/// Forward kinematics over the first q.size() arm joints (5 or 7); the arm base sits on the turn axis.
/// checkLimits = false skips the OutOfRange check (finite differences just outside the strokes).
ArmKinematics armForwardKinematics(const RobotModel& model, const Eigen::VectorXd& q, bool checkLimits = true);

}  // namespace walkex
