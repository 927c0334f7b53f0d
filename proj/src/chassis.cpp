#include "walkex/chassis.hpp"

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "walkex/errors.hpp"
#include "walkex/hqp.hpp"

namespace walkex {

void ChassisGains::validate() const
{
  const double g[6] = {kpHeight, kdHeight, kpRoll, kdRoll, kpPitch, kdPitch};
  const char* names[6] = {"kp_height", "kd_height", "kp_roll", "kd_roll", "kp_pitch", "kd_pitch"};
  for (int i = 0; i < 6; ++i) {
    if (!(g[i] >= 0.0)) throw ConfigError(std::string("chassis.gains.") + names[i], "must be >= 0");
  }
}

Mat3 ChassisState::orientation() const
{
  return (Eigen::AngleAxisd(pitch, Vec3::UnitY()) * Eigen::AngleAxisd(roll, Vec3::UnitX())).toRotationMatrix();
}

VerticalWrench gravityFeedForward(const RobotModel& model, const Mat3& baseOrientation, double contactHeight)
{
  const Vec3 fg = model.machineMass * (baseOrientation.transpose() * model.gravity);
  const Vec3 lever = model.chassisCom - contactHeight * Vec3::UnitZ();
  const Vec3 moment = lever.cross(fg);
  return {-fg.z(), -moment.x(), -moment.y()};
}

VerticalWrench virtualModel(const ChassisState& s, const ChassisTarget& t, const VerticalWrench& feedForward)
{
  const ChassisGains& g = t.gains;
  return feedForward + Vec3(g.kpHeight * (t.height - s.height) - g.kdHeight * s.heightRate,
                            g.kpRoll * (t.roll - s.roll) - g.kdRoll * s.rollRate,
                            g.kpPitch * (t.pitch - s.pitch) - g.kdPitch * s.pitchRate);
}

ForceDistribution distributeForces(const VerticalWrench& wrench, const std::array<Vec2, 4>& contacts, double fMin,
                                   double fMax, DistributionCost cost)
{
  if (!(fMin <= fMax)) throw ConfigError("chassis.f_min", "must not exceed f_max");
  Eigen::Matrix<double, 3, 4> a;
  for (int i = 0; i < 4; ++i) a.col(i) = Vec3(1.0, contacts[i].y(), -contacts[i].x());
  Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  if (lu.rank() < 3) throw SingularMapping("contact positions are collinear");

  Eigen::MatrixXd bounds(8, 4);
  bounds << Eigen::Matrix4d::Identity(), -Eigen::Matrix4d::Identity();
  Eigen::VectorXd limits(8);
  limits << Eigen::Vector4d::Constant(fMax), Eigen::Vector4d::Constant(-fMin);

  const double mean = wrench(0) / 4.0;
  std::vector<Task> tasks = {
      Task::equality("wrench", 0, a, wrench),
      Task::inequality("bounds", 0, bounds, limits),
      Task::equality("distribution", 1, Eigen::Matrix4d::Identity(),
                     cost == DistributionCost::Equal ? Eigen::Vector4d::Constant(mean) : Eigen::Vector4d::Zero()),
  };
  const HqpSolution sol = solveHqp(tasks, 4);
  const double scale = std::max(1.0, wrench.cwiseAbs().maxCoeff());
  if (sol.residuals[0] > 1e-8 * scale) throw Infeasible("wrench outside the bounded-force polytope", 0, 0);
  ForceDistribution out;
  for (int i = 0; i < 4; ++i) out.contact[i] = sol.x(i);
  return out;
}

void forcesToCylinders(ForceDistribution& d, const std::array<Vec3, 4>& legJoints, const RobotModel& model)
{
  for (int i = 0; i < 4; ++i) {
    const LegId leg = kLegIds[i];
    const Vec3 beta = legJointToPiston(model, leg, legJoints[i]);
    const double j2 = legPistonJacobian(model, leg, beta)(1, 1);
    const Vec3 j1 = legContactJacobian(model, leg, legJoints[i]).col(1);
    const double force = j2 * j1.dot(-d.contact[i] * Vec3::UnitZ());
    const Cylinder& c = model.leg(leg).cylinders[1];
    d.cylinder[i] = force;
    d.saturated[i] = force < c.forceMin || force > c.forceMax;
  }
}

ChassisSim::ChassisSim(const RobotModel& model, const ChassisSimConfig& config, const ChassisState& initial)
    : model_(model), config_(config), state_(initial)
{
  if (!(config.dt > 0.0)) throw ConfigError("chassis.dt", "must be positive");
  if (!(config.heightDamping > 0.0) || !(config.rotationDamping > 0.0)) {
    throw ConfigError("chassis.damping", "must be positive");
  }
  config_.terrainNormal.normalize();
  last_.state = state_;
  last_.legJoints = solveLegs(state_);
}

std::array<Vec3, 4> ChassisSim::solveLegs(const ChassisState& pose) const
{
  const Mat3 r = pose.orientation();
  const Vec3& n = config_.terrainNormal;
  const Vec3 base = pose.height * n;
  const Vec3 nB = r.transpose() * n;
  std::array<Vec3, 4> joints;
  for (int i = 0; i < 4; ++i) {
    const LegId leg = kLegIds[i];
    const Cylinder& flex = model_.leg(leg).cylinders[1];
    Vec3 alpha(config_.abad[i], 0.5 * (flex.jointMin() + flex.jointMax()), 0.0);
    bool done = false;
    for (int it = 0; it < 50 && !done; ++it) {
      const double gap = n.dot(base + r * legContactVector(model_, leg, alpha, nB));
      const double slope = n.dot(r * legContactJacobian(model_, leg, alpha).col(1));
      if (std::abs(gap) < 1e-12) {
        done = true;
        break;
      }
      if (std::abs(slope) < 1e-9) break;
      alpha(1) = std::clamp(alpha(1) - gap / slope, flex.jointMin(), flex.jointMax());
    }
    if (!done) {
      throw OutOfRange(std::string("leg ") + legName(leg) + " cannot reach the terrain at this pose");
    }
    joints[i] = alpha;
  }
  return joints;
}

const ChassisTick& ChassisSim::step(const ChassisTarget& target)
{
  const std::array<Vec3, 4> joints = solveLegs(state_);
  const Mat3 r = state_.orientation();
  const Vec3 nB = r.transpose() * config_.terrainNormal;
  std::array<Vec2, 4> contacts;
  double contactHeight = 0.0;
  for (int i = 0; i < 4; ++i) {
    const Vec3 s = legContactVector(model_, kLegIds[i], joints[i], nB);
    contacts[i] = s.head<2>();
    contactHeight += 0.25 * s.z();
  }
  const VerticalWrench ff = gravityFeedForward(model_, r, contactHeight);
  const VerticalWrench w = virtualModel(state_, target, ff);
  ForceDistribution forces =
      distributeForces(w, contacts, config_.fMin, config_.fMaxFraction * model_.weight(), config_.cost);
  forcesToCylinders(forces, joints, model_);

  // the wrench beyond gravity moves the pose against viscous resistance
  const Vec3 excess = w - ff;
  state_.heightRate = excess(0) / config_.heightDamping;
  state_.rollRate = excess(1) / config_.rotationDamping;
  state_.pitchRate = excess(2) / config_.rotationDamping;
  state_.height += config_.dt * state_.heightRate;
  state_.roll += config_.dt * state_.rollRate;
  state_.pitch += config_.dt * state_.pitchRate;
  time_ += config_.dt;

  last_.time = time_;
  last_.state = state_;
  last_.legJoints = joints;
  last_.wrench = w;
  last_.forces = forces;
  return last_;
}

}  // namespace walkex
