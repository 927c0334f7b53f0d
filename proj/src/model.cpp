#include "walkex/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <unsupported/Eigen/AutoDiff>

#include "walkex/errors.hpp"

namespace walkex {

namespace {

constexpr double kLimitTolerance = 1e-9;
constexpr double kMinMomentArm = 1e-6;

const char* kCylinderNames[3] = {"abad", "flexion", "steering"};

double triangleAngle(const Cylinder& c, double length)
{
  const double cosTheta = (c.a * c.a + c.b * c.b - length * length) / (2.0 * c.a * c.b);
  return std::acos(std::clamp(cosTheta, -1.0, 1.0));
}

Mat3 rotX(double a) { return Eigen::AngleAxisd(a, Vec3::UnitX()).toRotationMatrix(); }
Mat3 rotY(double a) { return Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix(); }
Mat3 rotZ(double a) { return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix(); }

std::string kindName(CylinderKind k)
{
  switch (k) {
    case CylinderKind::Linkage: return "linkage";
    case CylinderKind::Prismatic: return "prismatic";
    case CylinderKind::Rotary: return "rotary";
  }
  return "linkage";
}

CylinderKind parseKind(const std::string& key, const std::string& v)
{
  if (v == "linkage") return CylinderKind::Linkage;
  if (v == "prismatic") return CylinderKind::Prismatic;
  if (v == "rotary") return CylinderKind::Rotary;
  throw ConfigError(key, "unknown cylinder kind '" + v + "'");
}

Cylinder linkage(double a, double b, double l0, double smin, double smax, int dir, double nominal, double boreArea,
                 double rodArea, double vmax)
{
  Cylinder c;
  c.kind = CylinderKind::Linkage;
  c.a = a;
  c.b = b;
  c.lengthAtZero = l0;
  c.strokeMin = smin;
  c.strokeMax = smax;
  c.direction = dir;
  c.nominal = nominal;
  c.areaA = boreArea;
  c.areaB = rodArea;
  c.velocityMin = -vmax;
  c.velocityMax = vmax;
  c.forceMax = 3.5e7 * boreArea;
  c.forceMin = -3.5e7 * rodArea;
  return c;
}

void writeCylinder(std::ostringstream& out, const std::string& p, const Cylinder& c)
{
  out << p << ".kind = " << kindName(c.kind) << "\n";
  if (c.kind == CylinderKind::Linkage) {
    out << p << ".a = " << formatDouble(c.a) << "\n";
    out << p << ".b = " << formatDouble(c.b) << "\n";
    out << p << ".length_at_zero = " << formatDouble(c.lengthAtZero) << "\n";
    out << p << ".direction = " << c.direction << "\n";
  }
  if (c.kind == CylinderKind::Rotary) {
    out << p << ".ratio = " << formatDouble(c.ratio) << "\n";
  }
  if (c.kind != CylinderKind::Prismatic) {
    out << p << ".nominal = " << formatDouble(c.nominal) << "\n";
  }
  out << p << ".stroke = " << formatList({c.strokeMin, c.strokeMax}) << "\n";
  out << p << ".area_a = " << formatDouble(c.areaA) << "\n";
  out << p << ".area_b = " << formatDouble(c.areaB) << "\n";
  out << p << ".velocity_limits = " << formatList({c.velocityMin, c.velocityMax}) << "\n";
  out << p << ".force_limits = " << formatList({c.forceMin, c.forceMax}) << "\n";
}

Cylinder readCylinder(const KeyValueDoc& doc, const std::string& p)
{
  Cylinder c;
  c.kind = parseKind(p + ".kind", doc.getString(p + ".kind"));
  if (c.kind == CylinderKind::Linkage) {
    c.a = doc.getDouble(p + ".a");
    c.b = doc.getDouble(p + ".b");
    c.lengthAtZero = doc.getDouble(p + ".length_at_zero");
    c.direction = doc.getInt(p + ".direction");
    if (c.direction != 1 && c.direction != -1) {
      throw ConfigError(p + ".direction", "must be 1 or -1");
    }
  }
  if (c.kind == CylinderKind::Rotary) {
    c.ratio = doc.getDouble(p + ".ratio");
  }
  if (c.kind != CylinderKind::Prismatic) {
    c.nominal = doc.getDouble(p + ".nominal");
  }
  const auto stroke = doc.getList(p + ".stroke", 2);
  c.strokeMin = stroke[0];
  c.strokeMax = stroke[1];
  c.areaA = doc.getDouble(p + ".area_a");
  c.areaB = doc.getDouble(p + ".area_b");
  const auto v = doc.getList(p + ".velocity_limits", 2);
  c.velocityMin = v[0];
  c.velocityMax = v[1];
  const auto f = doc.getList(p + ".force_limits", 2);
  c.forceMin = f[0];
  c.forceMax = f[1];
  return c;
}

void validateCylinder(const std::string& name, const Cylinder& c)
{
  if (!(c.strokeMin < c.strokeMax)) {
    throw ModelError(name + ": stroke min must be below stroke max");
  }
  if (c.kind != CylinderKind::Rotary && !(c.areaA > c.areaB)) {
    throw ModelError(name + ": piston area must exceed rod-side area");
  }
  if (!(c.areaA > 0.0 && c.areaB > 0.0)) {
    throw ModelError(name + ": areas must be positive");
  }
  if (!(c.velocityMin < c.velocityMax) || !(c.forceMin < c.forceMax)) {
    throw ModelError(name + ": limit ranges must be ordered");
  }
  if (c.kind == CylinderKind::Linkage) {
    if (!(c.a > 0.0 && c.b > 0.0)) {
      throw ModelError(name + ": linkage sides must be positive");
    }
    const double lmin = c.lengthAtZero + c.strokeMin;
    const double lmax = c.lengthAtZero + c.strokeMax;
    if (!(lmin > std::abs(c.a - c.b)) || !(lmax < c.a + c.b)) {
      throw ModelError(name + ": cylinder length leaves the closable triangle range");
    }
  }
  if (c.kind == CylinderKind::Rotary && !(c.ratio > 0.0)) {
    throw ModelError(name + ": rotary ratio must be positive");
  }
}

using AdScalar = Eigen::AutoDiffScalar<Eigen::VectorXd>;

/// dM/dq_k for k = 0..n-1, via forward-mode autodiff through the Newton-Euler mass matrix.
std::vector<Eigen::MatrixXd> massMatrixGradient(const RobotModel& model, const Eigen::VectorXd& q)
{
  const int n = static_cast<int>(q.size());
  VecT<AdScalar> qa(n);
  for (int i = 0; i < n; ++i) {
    qa(i) = AdScalar(q(i), n, i);
  }
  const auto m = model.chain().massMatrix<AdScalar>(qa);
  std::vector<Eigen::MatrixXd> dm(n, Eigen::MatrixXd::Zero(n, n));
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const Eigen::VectorXd& d = m(r, c).derivatives();
      for (int k = 0; k < n && k < d.size(); ++k) {
        dm[k](r, c) = d(k);
      }
    }
  }
  return dm;
}

Eigen::VectorXd padArm(const Eigen::VectorXd& q)
{
  if (q.size() > kArmJoints || q.size() < 1) {
    throw OutOfRange("arm configuration must have 1.." + std::to_string(kArmJoints) + " entries");
  }
  Eigen::VectorXd full = Eigen::VectorXd::Zero(kArmJoints);
  full.head(q.size()) = q;
  return full;
}

}  // namespace

const char* legName(LegId leg)
{
  switch (leg) {
    case LegId::RF: return "rf";
    case LegId::LF: return "lf";
    case LegId::LH: return "lh";
    case LegId::RH: return "rh";
  }
  return "?";
}

// ---- Cylinder ----

double Cylinder::jointAngle(double beta) const
{
  if (beta < strokeMin - kLimitTolerance || beta > strokeMax + kLimitTolerance) {
    throw OutOfRange("piston position " + formatDouble(beta) + " outside stroke [" + formatDouble(strokeMin) + ", " +
                     formatDouble(strokeMax) + "]");
  }
  switch (kind) {
    case CylinderKind::Prismatic: return beta;
    case CylinderKind::Rotary: return nominal + (beta - midStroke()) / ratio;
    case CylinderKind::Linkage:
      return nominal +
             direction * (triangleAngle(*this, lengthAtZero + beta) - triangleAngle(*this, lengthAtZero + midStroke()));
  }
  return 0.0;
}

double Cylinder::pistonPosition(double q) const
{
  if (q < jointMin() - kLimitTolerance || q > jointMax() + kLimitTolerance) {
    throw OutOfRange("joint position " + formatDouble(q) + " outside [" + formatDouble(jointMin()) + ", " +
                     formatDouble(jointMax()) + "]");
  }
  switch (kind) {
    case CylinderKind::Prismatic: return q;
    case CylinderKind::Rotary: return midStroke() + ratio * (q - nominal);
    case CylinderKind::Linkage: {
      const double theta = triangleAngle(*this, lengthAtZero + midStroke()) + direction * (q - nominal);
      return std::sqrt(a * a + b * b - 2.0 * a * b * std::cos(theta)) - lengthAtZero;
    }
  }
  return 0.0;
}

double Cylinder::jointRate(double beta) const
{
  if (kind == CylinderKind::Prismatic) return 1.0;
  if (kind == CylinderKind::Rotary) return 1.0 / ratio;
  const double length = lengthAtZero + beta;
  const double theta = triangleAngle(*this, length);
  const double arm = a * b * std::sin(theta) / length;
  if (arm < kMinMomentArm) {
    throw SingularMapping("degenerate linkage: moment arm " + formatDouble(arm) + " m");
  }
  return direction / arm;
}

double Cylinder::pistonRate(double q) const
{
  if (kind == CylinderKind::Prismatic) return 1.0;
  if (kind == CylinderKind::Rotary) return ratio;
  const double theta = triangleAngle(*this, lengthAtZero + midStroke()) + direction * (q - nominal);
  const double length = std::sqrt(a * a + b * b - 2.0 * a * b * std::cos(theta));
  const double arm = a * b * std::sin(theta) / length;
  if (arm < kMinMomentArm) {
    throw SingularMapping("degenerate linkage: moment arm " + formatDouble(arm) + " m");
  }
  return direction * arm;
}

double Cylinder::jointMin() const { return std::min(jointAngle(strokeMin), jointAngle(strokeMax)); }
double Cylinder::jointMax() const { return std::max(jointAngle(strokeMin), jointAngle(strokeMax)); }

// ---- RobotModel ----

RobotModel RobotModel::defaultModel()
{
  RobotModel m;
  m.gravity = Vec3(0.0, 0.0, -9.81);
  m.wheelRadius = 0.45;
  m.machineMass = 12000.0;
  m.chassisCom = Vec3(0.0, 0.0, -0.4);
  m.turnAxisOffset = Vec3(0.0, 0.0, 0.6);
  m.gnssLeverArm = {Vec3(-0.5, 0.6, 1.5), Vec3(-0.5, -0.6, 1.5)};
  m.pumpFlowMax = 0.004;

  const std::array<Vec3, 4> hips = {Vec3(1.5, -0.9, -0.2), Vec3(1.5, 0.9, -0.2), Vec3(-1.5, 0.9, -0.2),
                                    Vec3(-1.5, -0.9, -0.2)};
  for (LegId id : kLegIds) {
    Leg& leg = m.legs[legIndex(id)];
    const bool front = id == LegId::RF || id == LegId::LF;
    const bool left = id == LegId::LF || id == LegId::LH;
    leg.hipOffset = hips[legIndex(id)];
    leg.length = 1.2;
    leg.kingpinOffset = 0.0;
    leg.cylinders[0] = linkage(0.4, 0.5, 0.5, 0.0, 0.3, left ? 1 : -1, 0.0, 0.00785, 0.0047, 0.1);
    leg.cylinders[1] = linkage(0.5, 0.9, 0.7, 0.0, 0.5, front ? -1 : 1, front ? -0.4 : 0.4, 0.0154, 0.009, 0.15);
    leg.cylinders[2] = linkage(0.3, 0.4, 0.3, 0.0, 0.3, front ? 1 : -1, 0.0, 0.0038, 0.0025, 0.1);
  }

  auto diag = [](double x, double y, double z) { return Vec3(x, y, z).asDiagonal().toDenseMatrix(); };
  m.arm.resize(kArmJoints);
  ArmJoint& turn = m.arm[0];
  turn.name = "turn";
  turn.joint = {JointType::Revolute, Vec3::Zero(), Mat3::Identity(), Vec3::UnitZ()};
  turn.link = {5000.0, Vec3(-0.6, 0.0, 0.8), diag(6000.0, 8000.0, 7000.0)};
  turn.cylinder.kind = CylinderKind::Rotary;
  turn.cylinder.ratio = 0.1;
  turn.cylinder.nominal = 0.0;
  turn.cylinder.strokeMin = -100.0;
  turn.cylinder.strokeMax = 100.0;
  turn.cylinder.areaA = 0.01;
  turn.cylinder.areaB = 0.01;
  turn.cylinder.velocityMin = -0.1;
  turn.cylinder.velocityMax = 0.1;
  turn.cylinder.forceMin = -5e5;
  turn.cylinder.forceMax = 5e5;

  ArmJoint& boom = m.arm[1];
  boom.name = "boom";
  boom.joint = {JointType::Revolute, Vec3(0.8, 0.0, 0.4), Mat3::Identity(), -Vec3::UnitY()};
  boom.link = {900.0, Vec3(1.6, 0.0, 0.15), diag(40.0, 800.0, 800.0)};
  boom.cylinder = linkage(1.0, 1.6, 1.3, 0.0, 1.0, 1, 0.3, 0.01327, 0.00825, 0.25);

  ArmJoint& dipper = m.arm[2];
  dipper.name = "dipper";
  dipper.joint = {JointType::Revolute, Vec3(3.2, 0.0, 0.0), Mat3::Identity(), -Vec3::UnitY()};
  dipper.link = {450.0, Vec3(0.9, 0.0, 0.0), diag(15.0, 130.0, 130.0)};
  dipper.cylinder = linkage(0.6, 1.9, 1.5, 0.0, 0.9, -1, -1.4, 0.0095, 0.0057, 0.3);

  ArmJoint& tele = m.arm[3];
  tele.name = "telescope";
  tele.joint = {JointType::Prismatic, Vec3(1.8, 0.0, 0.0), Mat3::Identity(), Vec3::UnitX()};
  tele.link = {200.0, Vec3(0.5, 0.0, 0.0), diag(3.0, 17.0, 17.0)};
  tele.cylinder.kind = CylinderKind::Prismatic;
  tele.cylinder.strokeMin = 0.0;
  tele.cylinder.strokeMax = 1.0;
  tele.cylinder.areaA = 0.00503;
  tele.cylinder.areaB = 0.00306;
  tele.cylinder.velocityMin = -0.3;
  tele.cylinder.velocityMax = 0.3;
  tele.cylinder.forceMax = 3.5e7 * 0.00503;
  tele.cylinder.forceMin = -3.5e7 * 0.00306;

  ArmJoint& bucket = m.arm[4];
  bucket.name = "bucket";
  bucket.joint = {JointType::Revolute, Vec3(0.3, 0.0, 0.0), Mat3::Identity(), -Vec3::UnitY()};
  bucket.link = {400.0, Vec3(0.5, 0.0, -0.1), diag(25.0, 35.0, 35.0)};
  bucket.cylinder = linkage(0.4, 0.7, 0.5, 0.0, 0.5, 1, -0.5, 0.00636, 0.00398, 0.3);

  ArmJoint& tilt = m.arm[5];
  tilt.name = "tilt";
  tilt.joint = {JointType::Revolute, Vec3(0.4, 0.0, 0.0), Mat3::Identity(), Vec3::UnitZ()};
  tilt.link = {0.0, Vec3::Zero(), Mat3::Zero()};
  tilt.cylinder = linkage(0.2, 0.3, 0.2, 0.0, 0.2, 1, 0.0, 0.00385, 0.0026, 0.2);

  ArmJoint& rot = m.arm[6];
  rot.name = "rotator";
  rot.joint = {JointType::Revolute, Vec3(0.15, 0.0, 0.0), Mat3::Identity(), Vec3::UnitX()};
  rot.link = {0.0, Vec3::Zero(), Mat3::Zero()};
  rot.cylinder.kind = CylinderKind::Rotary;
  rot.cylinder.ratio = 0.02;
  rot.cylinder.nominal = 0.0;
  rot.cylinder.strokeMin = -100.0;
  rot.cylinder.strokeMax = 100.0;
  rot.cylinder.areaA = 0.002;
  rot.cylinder.areaB = 0.002;
  rot.cylinder.velocityMin = -0.03;
  rot.cylinder.velocityMax = 0.03;
  rot.cylinder.forceMin = -1e5;
  rot.cylinder.forceMax = 1e5;

  m.toolOffset = Vec3(0.5, 0.0, 0.0);
  m.frictionViscous.resize(kArmForceJoints);
  m.frictionViscous << 5e3, 2e4, 1e4, 5e3, 3e3;
  m.frictionStatic.resize(kArmForceJoints);
  m.frictionStatic << 1e3, 2e3, 1e3, 1e3, 500.0;
  m.finalize();
  return m;
}

void RobotModel::finalize()
{
  if (!(wheelRadius > 0.0)) {
    throw ModelError("wheel radius must be positive");
  }
  if (!(machineMass > 0.0)) {
    throw ModelError("machine mass must be positive");
  }
  if (!(pumpFlowMax > 0.0)) {
    throw ModelError("pump flow limit must be positive");
  }
  for (LegId id : kLegIds) {
    const Leg& l = legs[legIndex(id)];
    if (!(l.length > 0.0)) {
      throw ModelError(std::string("leg ") + legName(id) + ": length must be positive");
    }
    for (int k = 0; k < 3; ++k) {
      validateCylinder(std::string("leg ") + legName(id) + " " + kCylinderNames[k], l.cylinders[k]);
    }
  }
  if (static_cast<int>(arm.size()) != kArmJoints) {
    throw ModelError("arm must have " + std::to_string(kArmJoints) + " joints");
  }
  chain_.joints.clear();
  chain_.links.clear();
  for (const ArmJoint& j : arm) {
    validateCylinder("arm " + j.name, j.cylinder);
    if (j.link.mass < 0.0) {
      throw ModelError("arm " + j.name + ": negative mass");
    }
    if (std::abs(j.joint.axis.norm() - 1.0) > 1e-9) {
      throw ModelError("arm " + j.name + ": joint axis must be unit length");
    }
    if ((j.joint.type == JointType::Prismatic) != (j.cylinder.kind == CylinderKind::Prismatic)) {
      throw ModelError("arm " + j.name + ": prismatic joints need a prismatic cylinder and vice versa");
    }
    chain_.joints.push_back(j.joint);
    chain_.links.push_back(j.link);
  }
  for (int i = 1; i < 3; ++i) {
    if (!(arm[i].joint.offset.norm() > 0.0)) {
      throw ModelError("arm " + arm[i].name + ": link length must be positive");
    }
  }
  if (frictionViscous.size() != kArmForceJoints || frictionStatic.size() != kArmForceJoints) {
    throw ModelError("friction vectors must have " + std::to_string(kArmForceJoints) + " entries");
  }
}

Eigen::VectorXd RobotModel::armJointMin() const
{
  Eigen::VectorXd v(arm.size());
  for (std::size_t i = 0; i < arm.size(); ++i) v(i) = arm[i].cylinder.jointMin();
  return v;
}

Eigen::VectorXd RobotModel::armJointMax() const
{
  Eigen::VectorXd v(arm.size());
  for (std::size_t i = 0; i < arm.size(); ++i) v(i) = arm[i].cylinder.jointMax();
  return v;
}

std::string RobotModel::toText() const
{
  std::ostringstream out;
  out << "kind = model\n";
  out << "schema_version = 1\n";
  out << "gravity = " << formatVec3(gravity) << "\n";
  out << "wheel_radius = " << formatDouble(wheelRadius) << "\n";
  out << "machine_mass = " << formatDouble(machineMass) << "\n";
  out << "chassis.com = " << formatVec3(chassisCom) << "\n";
  out << "chassis.turn_axis_offset = " << formatVec3(turnAxisOffset) << "\n";
  out << "gnss.lever_arm_1 = " << formatVec3(gnssLeverArm[0]) << "\n";
  out << "gnss.lever_arm_2 = " << formatVec3(gnssLeverArm[1]) << "\n";
  out << "pump.flow_max = " << formatDouble(pumpFlowMax) << "\n";
  for (LegId id : kLegIds) {
    const Leg& l = legs[legIndex(id)];
    const std::string p = std::string("leg.") + legName(id);
    out << "\n" << p << ".hip_offset = " << formatVec3(l.hipOffset) << "\n";
    out << p << ".length = " << formatDouble(l.length) << "\n";
    out << p << ".kingpin_offset = " << formatDouble(l.kingpinOffset) << "\n";
    for (int k = 0; k < 3; ++k) {
      writeCylinder(out, p + "." + kCylinderNames[k], l.cylinders[k]);
    }
  }
  for (const ArmJoint& j : arm) {
    const std::string p = "arm." + j.name;
    out << "\n" << p << ".type = " << (j.joint.type == JointType::Revolute ? "revolute" : "prismatic") << "\n";
    out << p << ".offset = " << formatVec3(j.joint.offset) << "\n";
    out << p << ".axis = " << formatVec3(j.joint.axis) << "\n";
    out << p << ".mass = " << formatDouble(j.link.mass) << "\n";
    out << p << ".com = " << formatVec3(j.link.com) << "\n";
    out << p << ".inertia = " << formatVec3(j.link.inertia.diagonal()) << "\n";
    writeCylinder(out, p + ".cylinder", j.cylinder);
  }
  out << "\narm.tool_offset = " << formatVec3(toolOffset) << "\n";
  out << "arm.friction_viscous = "
      << formatList(std::vector<double>(frictionViscous.data(), frictionViscous.data() + frictionViscous.size()))
      << "\n";
  out << "arm.friction_static = "
      << formatList(std::vector<double>(frictionStatic.data(), frictionStatic.data() + frictionStatic.size())) << "\n";
  return out.str();
}

RobotModel RobotModel::fromDoc(const KeyValueDoc& doc)
{
  if (doc.getString("kind", "model") != "model") {
    throw ConfigError("kind", "expected a model file");
  }
  if (doc.getInt("schema_version") != 1) {
    throw ConfigError("schema_version", "unsupported schema version");
  }
  RobotModel m;
  m.gravity = doc.getVec3("gravity", m.gravity);
  m.wheelRadius = doc.getDouble("wheel_radius");
  m.machineMass = doc.getDouble("machine_mass");
  m.chassisCom = doc.getVec3("chassis.com");
  m.turnAxisOffset = doc.getVec3("chassis.turn_axis_offset");
  m.gnssLeverArm[0] = doc.getVec3("gnss.lever_arm_1");
  m.gnssLeverArm[1] = doc.getVec3("gnss.lever_arm_2");
  m.pumpFlowMax = doc.getDouble("pump.flow_max");
  for (LegId id : kLegIds) {
    Leg& l = m.legs[legIndex(id)];
    const std::string p = std::string("leg.") + legName(id);
    l.hipOffset = doc.getVec3(p + ".hip_offset");
    l.length = doc.getDouble(p + ".length");
    l.kingpinOffset = doc.getDouble(p + ".kingpin_offset", 0.0);
    for (int k = 0; k < 3; ++k) {
      l.cylinders[k] = readCylinder(doc, p + "." + kCylinderNames[k]);
    }
  }
  const char* names[kArmJoints] = {"turn", "boom", "dipper", "telescope", "bucket", "tilt", "rotator"};
  m.arm.resize(kArmJoints);
  for (int i = 0; i < kArmJoints; ++i) {
    ArmJoint& j = m.arm[i];
    j.name = names[i];
    const std::string p = "arm." + j.name;
    const std::string type = doc.getString(p + ".type");
    if (type != "revolute" && type != "prismatic") {
      throw ConfigError(p + ".type", "expected revolute or prismatic");
    }
    j.joint.type = type == "revolute" ? JointType::Revolute : JointType::Prismatic;
    j.joint.offset = doc.getVec3(p + ".offset");
    j.joint.axis = doc.getVec3(p + ".axis");
    j.link.mass = doc.getDouble(p + ".mass");
    j.link.com = doc.getVec3(p + ".com");
    j.link.inertia = doc.getVec3(p + ".inertia").asDiagonal();
    j.cylinder = readCylinder(doc, p + ".cylinder");
  }
  m.toolOffset = doc.getVec3("arm.tool_offset");
  const auto fv = doc.getList("arm.friction_viscous", kArmForceJoints);
  const auto fs = doc.getList("arm.friction_static", kArmForceJoints);
  m.frictionViscous = Eigen::Map<const Eigen::VectorXd>(fv.data(), kArmForceJoints);
  m.frictionStatic = Eigen::Map<const Eigen::VectorXd>(fs.data(), kArmForceJoints);
  doc.checkAllConsumed();
  m.finalize();
  return m;
}

RobotModel RobotModel::load(const std::string& path) { return fromDoc(KeyValueDoc::load(path)); }

// ---- legs ----

void checkLegLimits(const RobotModel& model, LegId leg, const Vec3& alpha)
{
  const Leg& l = model.leg(leg);
  for (int k = 0; k < 3; ++k) {
    const Cylinder& c = l.cylinders[k];
    if (alpha(k) < c.jointMin() - kLimitTolerance || alpha(k) > c.jointMax() + kLimitTolerance) {
      throw OutOfRange(std::string("leg ") + legName(leg) + " " + kCylinderNames[k] + " angle " +
                       formatDouble(alpha(k)) + " outside limits");
    }
  }
}

Vec3 legWheelCenter(const RobotModel& model, LegId leg, const Vec3& alpha)
{
  checkLegLimits(model, leg, alpha);
  const Leg& l = model.leg(leg);
  return l.hipOffset +
         rotX(alpha(0)) * rotY(alpha(1)) * (Vec3(0.0, 0.0, -l.length) + rotZ(alpha(2)) * Vec3(0.0, l.kingpinOffset, 0.0));
}

Vec3 legContactVector(const RobotModel& model, LegId leg, const Vec3& alpha, const Vec3& normal)
{
  return legWheelCenter(model, leg, alpha) - model.wheelRadius * normal;
}

Mat3 legContactJacobian(const RobotModel& model, LegId leg, const Vec3& alpha)
{
  const Leg& l = model.leg(leg);
  const Vec3 center = legWheelCenter(model, leg, alpha);
  const Mat3 rx = rotX(alpha(0));
  const Mat3 rxy = rx * rotY(alpha(1));
  const Vec3 knee = l.hipOffset + rxy * Vec3(0.0, 0.0, -l.length);
  Mat3 j;
  j.col(0) = Vec3::UnitX().cross(center - l.hipOffset);
  j.col(1) = (rx * Vec3::UnitY()).cross(center - l.hipOffset);
  j.col(2) = (rxy * Vec3::UnitZ()).cross(center - knee);
  return j;
}

Vec3 legWheelForward(const RobotModel& model, LegId leg, const Vec3& alpha)
{
  checkLegLimits(model, leg, alpha);
  return rotX(alpha(0)) * rotY(alpha(1)) * rotZ(alpha(2)) * Vec3::UnitX();
}

Vec3 legPistonToJoint(const RobotModel& model, LegId leg, const Vec3& beta)
{
  const Leg& l = model.leg(leg);
  return {l.cylinders[0].jointAngle(beta(0)), l.cylinders[1].jointAngle(beta(1)), l.cylinders[2].jointAngle(beta(2))};
}

Vec3 legJointToPiston(const RobotModel& model, LegId leg, const Vec3& alpha)
{
  const Leg& l = model.leg(leg);
  return {l.cylinders[0].pistonPosition(alpha(0)), l.cylinders[1].pistonPosition(alpha(1)),
          l.cylinders[2].pistonPosition(alpha(2))};
}

Mat3 legPistonJacobian(const RobotModel& model, LegId leg, const Vec3& beta)
{
  const Leg& l = model.leg(leg);
  return Vec3(l.cylinders[0].jointRate(beta(0)), l.cylinders[1].jointRate(beta(1)), l.cylinders[2].jointRate(beta(2)))
      .asDiagonal();
}

// ---- arm ----

void checkArmLimits(const RobotModel& model, const Eigen::VectorXd& q)
{
  for (int i = 0; i < q.size(); ++i) {
    const Cylinder& c = model.arm[i].cylinder;
    if (!std::isfinite(q(i)) || q(i) < c.jointMin() - kLimitTolerance || q(i) > c.jointMax() + kLimitTolerance) {
      throw OutOfRange("arm joint " + model.arm[i].name + " at " + formatDouble(q(i)) + " outside limits");
    }
  }
}

Eigen::VectorXd armPistonToJoint(const RobotModel& model, const Eigen::VectorXd& beta)
{
  Eigen::VectorXd q(beta.size());
  for (int i = 0; i < beta.size(); ++i) q(i) = model.arm[i].cylinder.jointAngle(beta(i));
  return q;
}

Eigen::VectorXd armJointToPiston(const RobotModel& model, const Eigen::VectorXd& q)
{
  Eigen::VectorXd beta(q.size());
  for (int i = 0; i < q.size(); ++i) beta(i) = model.arm[i].cylinder.pistonPosition(q(i));
  return beta;
}

Eigen::VectorXd forceMapping(const RobotModel& model, const Eigen::VectorXd& q)
{
  Eigen::VectorXd e(q.size());
  for (int i = 0; i < q.size(); ++i) e(i) = model.arm[i].cylinder.pistonRate(q(i));
  return e;
}

ArmDynamics armDynamics(const RobotModel& model, const Eigen::VectorXd& q, const Eigen::VectorXd& u)
{
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(q.size());
  const KinematicChain& c = model.chain();
  ArmDynamics d;
  d.M = c.massMatrix<double>(q);
  d.g = c.inverseDynamics<double>(q, zero, zero, model.gravity);
  d.b = c.inverseDynamics<double>(q, u, zero, Vec3::Zero());
  return d;
}

Eigen::MatrixXd massMatrixRate(const RobotModel& model, const Eigen::VectorXd& q, const Eigen::VectorXd& u)
{
  const auto dm = massMatrixGradient(model, q);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(q.size(), q.size());
  for (int k = 0; k < q.size(); ++k) out += dm[k] * u(k);
  return out;
}

Eigen::MatrixXd coriolisMatrix(const RobotModel& model, const Eigen::VectorXd& q, const Eigen::VectorXd& u)
{
  const int n = static_cast<int>(q.size());
  const auto dm = massMatrixGradient(model, q);
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int k = 0; k < n; ++k) {
        s += 0.5 * (dm[k](i, j) + dm[j](i, k) - dm[i](j, k)) * u(k);
      }
      c(i, j) = s;
    }
  }
  return c;
}

double armPotentialEnergy(const RobotModel& model, const Eigen::VectorXd& q)
{
  return model.chain().potentialEnergy(q, model.gravity);
}

double armKineticEnergy(const RobotModel& model, const Eigen::VectorXd& q, const Eigen::VectorXd& u)
{
  return 0.5 * u.dot(model.chain().massMatrix<double>(q) * u);
}

ArmKinematics armForwardKinematics(const RobotModel& model, const Eigen::VectorXd& q, bool checkLimits)
{
  if (checkLimits) checkArmLimits(model, q);
  const int n = static_cast<int>(q.size());
  const Eigen::VectorXd full = padArm(q);
  ArmKinematics k;
  k.frames = model.chain().frames<double>(full);
  const FrameT<double>& last = k.frames.back();
  k.rotation = last.rotation;
  k.position = last.position + last.rotation * model.toolOffset;
  const auto jac = model.chain().pointJacobian(k.frames, kArmJoints - 1, k.position, n);
  k.jT = jac.topRows<3>();
  k.jR = jac.bottomRows<3>();

  const FrameT<double>& cabin = k.frames.front();
  const Vec3 local = cabin.rotation.transpose() * (k.position - cabin.position);
  k.task << local.x(), local.z(), full(1) + full(2) + full(4), full(0);
  k.jTask = Eigen::MatrixXd::Zero(4, n);
  for (int j = 1; j < n; ++j) {
    const Vec3 d = cabin.rotation.transpose() * k.jT.col(j);
    k.jTask(0, j) = d.x();
    k.jTask(1, j) = d.z();
  }
  for (int j : {1, 2, 4}) {
    if (j < n) k.jTask(2, j) = 1.0;
  }
  k.jTask(3, 0) = 1.0;
  return k;
}

}  // namespace walkex
