#include "walkex/arm_control.hpp"

#include <algorithm>
#include <cmath>

#include "walkex/errors.hpp"

namespace walkex {

namespace {

constexpr int kMaxFlowRows = 16;

void requireFinite(const Eigen::MatrixXd& m, const char* what)
{
  if (!m.allFinite()) throw ModelError(std::string("non-finite ") + what);
}

Eigen::MatrixXd linkPointJacobian(const RobotModel& model, const std::vector<FrameT<double>>& frames, int link,
                                  const Vec3& point, int n)
{
  if (link < 0) return Eigen::MatrixXd::Zero(3, n);
  return model.chain().pointJacobian(frames, link, point, n).topRows<3>();
}

Shape worldShape(const CollisionBody& body, const std::vector<FrameT<double>>& frames)
{
  if (body.link < 0) return body.shape;
  return body.shape.transformed(frames[body.link].rotation, frames[body.link].position);
}

PidGains parsePid(const KeyValueDoc& doc, const std::string& p, const PidGains& fallback)
{
  PidGains g;
  g.kp = doc.getDouble(p + ".kp", fallback.kp);
  g.ki = doc.getDouble(p + ".ki", fallback.ki);
  g.kd = doc.getDouble(p + ".kd", fallback.kd);
  g.outputLimit = doc.getDouble(p + ".output_limit", fallback.outputLimit);
  if (!(g.kp >= 0.0)) throw ConfigError(p + ".kp", "must be >= 0");
  if (!(g.ki >= 0.0)) throw ConfigError(p + ".ki", "must be >= 0");
  if (!(g.kd >= 0.0)) throw ConfigError(p + ".kd", "must be >= 0");
  if (!(g.outputLimit > 0.0)) throw ConfigError(p + ".output_limit", "must be positive");
  return g;
}

/// Index of the task with the given name.
int taskIndex(const std::vector<Task>& tasks, const std::string& name)
{
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (tasks[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

void appendRow(Task& task, const Eigen::RowVectorXd& row, double rhs)
{
  const Eigen::Index r = task.matrix.rows();
  task.matrix.conservativeResize(r + 1, Eigen::NoChange);
  task.matrix.row(r) = row;
  task.vector.conservativeResize(r + 1);
  task.vector(r) = rhs;
}

}  // namespace

// ---- collision world ----

CollisionWorld CollisionWorld::defaults()
{
  CollisionWorld w;
  w.bodies = {
      {"chassis", -1, Shape::box(Vec3(0.0, 0.0, -1.0), Mat3::Identity(), Vec3(2.6, 1.3, 0.55))},
      {"cabin", 0, Shape::box(Vec3(0.3, 1.0, 0.9), Mat3::Identity(), Vec3(0.9, 0.45, 0.8))},
      {"boom", 1, Shape::capsule(Vec3(0.3, 0.0, 0.0), Vec3(2.9, 0.0, 0.0), 0.2)},
      {"dipper", 2, Shape::capsule(Vec3(0.2, 0.0, 0.0), Vec3(1.8, 0.0, 0.0), 0.15)},
      {"shovel", 6, Shape::box(Vec3(0.35, 0.0, 0.0), Mat3::Identity(), Vec3(0.35, 0.4, 0.3))},
  };
  w.pairs = {{4, 0}, {4, 1}, {3, 0}};
  return w;
}

int CollisionWorld::bodyIndex(const std::string& name) const
{
  for (std::size_t i = 0; i < bodies.size(); ++i) {
    if (bodies[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

void CollisionWorld::validate() const
{
  if (!(safetyDistance > 0.0)) throw ConfigError("collision.safety_distance", "must be positive");
  if (!(influenceDistance > safetyDistance)) {
    throw ConfigError("collision.influence_distance", "must exceed the safety distance");
  }
  if (!(damping > 0.0)) throw ConfigError("collision.damping", "must be positive");
  for (const CollisionBody& b : bodies) {
    const std::string p = "collision.body." + b.name;
    if (b.link < -1 || b.link >= kArmJoints) throw ConfigError(p + ".link", "must be -1.." + std::to_string(kArmJoints - 1));
    b.shape.validate(p);
  }
  const int n = static_cast<int>(bodies.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto [a, b] = pairs[i];
    if (a < 0 || a >= n || b < 0 || b >= n || a == b) {
      throw ConfigError("collision.pair." + std::to_string(i), "must name two distinct bodies");
    }
  }
}

std::vector<CollisionContact> evaluateCollisions(const RobotModel& model, const CollisionWorld& world,
                                                 const Eigen::VectorXd& q, CollisionMemory* memory)
{
  const int n = static_cast<int>(q.size());
  const ArmKinematics k = armForwardKinematics(model, q, false);
  if (memory && memory->size() != world.pairs.size()) memory->assign(world.pairs.size(), Vec3::Zero());
  std::vector<CollisionContact> out;
  for (std::size_t i = 0; i < world.pairs.size(); ++i) {
    const CollisionBody& a = world.bodies[world.pairs[i].first];
    const CollisionBody& b = world.bodies[world.pairs[i].second];
    const Shape sa = worldShape(a, k.frames), sb = worldShape(b, k.frames);
    ClosestPoints cp = closestPoints(sa, sb);
    if (cp.distance >= world.influenceDistance) continue;
    CollisionContact c;
    c.pair = static_cast<int>(i);
    if (cp.penetrating) {
      Vec3 normal = memory ? (*memory)[i] : Vec3::Zero();
      if (normal.squaredNorm() == 0.0) normal = (sb.center - sa.center).normalized();
      cp.normal = normal;
      c.allowedVelocity = 0.0;
    } else {
      if (memory) (*memory)[i] = cp.normal;
      c.allowedVelocity = world.damping * (cp.distance - world.safetyDistance) /
                          (world.influenceDistance - world.safetyDistance);
    }
    const Eigen::MatrixXd j = linkPointJacobian(model, k.frames, a.link, cp.p1, n) -
                              linkPointJacobian(model, k.frames, b.link, cp.p2, n);
    c.jacobian = cp.normal.transpose() * j;
    c.points = cp;
    out.push_back(c);
  }
  return out;
}

double minimumClearance(const RobotModel& model, const CollisionWorld& world, const Eigen::VectorXd& q)
{
  const ArmKinematics k = armForwardKinematics(model, q, false);
  double d = 1e300;
  for (const auto& [a, b] : world.pairs) {
    d = std::min(d, closestPoints(worldShape(world.bodies[a], k.frames), worldShape(world.bodies[b], k.frames)).distance);
  }
  return d;
}

// ---- configuration ----

void ArmControlConfig::validate() const
{
  if (!(dt > 0.0)) throw ConfigError("dt", "must be positive");
  if (!(dampingGain >= 0.0)) throw ConfigError("damping_gain", "must be >= 0");
  if (!(frictionEpsilon > 0.0)) throw ConfigError("friction_epsilon", "must be positive");
  collisions.validate();
}

ArmControlConfig parseArmConfig(const KeyValueDoc& doc)
{
  if (doc.getString("kind") != "arm") throw ConfigError("kind", "expected 'arm'");
  if (doc.getInt("schema_version") != 1) throw ConfigError("schema_version", "unsupported version");
  ArmControlConfig c;
  c.dt = doc.getDouble("dt", c.dt);
  c.dampingGain = doc.getDouble("damping_gain", c.dampingGain);
  c.frictionEpsilon = doc.getDouble("friction_epsilon", c.frictionEpsilon);
  CollisionWorld& w = c.collisions;
  w.influenceDistance = doc.getDouble("collision.influence_distance", w.influenceDistance);
  w.safetyDistance = doc.getDouble("collision.safety_distance", w.safetyDistance);
  w.damping = doc.getDouble("collision.damping", w.damping);

  const std::vector<std::string> names = doc.children("collision.body");
  if (!names.empty()) {
    w.bodies.clear();
    w.pairs.clear();
    for (const std::string& name : names) {
      const std::string p = "collision.body." + name;
      CollisionBody body;
      body.name = name;
      body.link = doc.getInt(p + ".link");
      Shape& s = body.shape;
      try {
        s.kind = parseShapeKind(doc.getString(p + ".shape"));
      } catch (const ConfigError& e) {
        throw ConfigError(p + ".shape", e.what());
      }
      s.center = doc.getVec3(p + ".center", Vec3::Zero());
      s.rotation = expMap(doc.getVec3(p + ".rotation", Vec3::Zero())).matrix();
      if (s.kind == ShapeKind::Box) {
        s.halfExtents = doc.getVec3(p + ".half_extents");
      } else {
        s.radius = doc.getDouble(p + ".radius");
        if (s.kind == ShapeKind::Capsule) s.halfLength = doc.getDouble(p + ".half_length");
      }
      w.bodies.push_back(body);
    }
    for (const std::string& id : doc.children("collision.pair")) {
      const std::string p = "collision.pair." + id;
      const int a = w.bodyIndex(doc.getString(p + ".a"));
      const int b = w.bodyIndex(doc.getString(p + ".b"));
      if (a < 0) throw ConfigError(p + ".a", "unknown body");
      if (b < 0) throw ConfigError(p + ".b", "unknown body");
      w.pairs.emplace_back(a, b);
    }
  }
  c.tracking.position = parsePid(doc, "tracking.position", c.tracking.position);
  c.tracking.orientation = parsePid(doc, "tracking.orientation", c.tracking.orientation);
  doc.checkAllConsumed();
  c.validate();
  return c;
}

// ---- limits ----

Eigen::RowVectorXd flowRow(const RobotModel& model, const Eigen::VectorXd& q, const Eigen::VectorXd& velocity)
{
  const Eigen::VectorXd e = forceMapping(model, q);
  Eigen::RowVectorXd row(q.size());
  for (int i = 0; i < q.size(); ++i) {
    const Cylinder& c = model.arm[i].cylinder;
    row(i) = (e(i) * velocity(i) > 0.0 ? c.areaA : -c.areaB) * e(i);
  }
  return row;
}

double pumpFlow(const RobotModel& model, const Eigen::VectorXd& q, const Eigen::VectorXd& v)
{
  return flowRow(model, q, v).dot(v);
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> jointVelocityLimits(const RobotModel& model, const Eigen::VectorXd& q)
{
  const Eigen::VectorXd e = forceMapping(model, q);
  Eigen::VectorXd lo(q.size()), hi(q.size());
  for (int i = 0; i < q.size(); ++i) {
    const Cylinder& c = model.arm[i].cylinder;
    const double a = c.velocityMin / e(i), b = c.velocityMax / e(i);
    lo(i) = std::min(a, b);
    hi(i) = std::max(a, b);
  }
  return {lo, hi};
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> jointForceLimits(const RobotModel& model, const Eigen::VectorXd& q)
{
  const Eigen::VectorXd e = forceMapping(model, q);
  Eigen::VectorXd lo(q.size()), hi(q.size());
  for (int i = 0; i < q.size(); ++i) {
    const Cylinder& c = model.arm[i].cylinder;
    const double a = e(i) * c.forceMin, b = e(i) * c.forceMax;
    lo(i) = std::min(a, b);
    hi(i) = std::max(a, b);
  }
  return {lo, hi};
}

// ---- task stacks ----

std::vector<Task> buildIdTasks(const RobotModel& model, const ArmControlConfig& config, const Eigen::VectorXd& q,
                               const Eigen::VectorXd& u, const IdTarget& target,
                               const std::vector<CollisionContact>& contacts)
{
  const int n = kArmForceJoints;
  if (q.size() != n || u.size() != n) throw OutOfRange("inverse dynamics needs " + std::to_string(n) + " joints");
  const double dt = config.dt;
  const ArmDynamics dyn = armDynamics(model, q, u);
  const ArmKinematics kin = armForwardKinematics(model, q);
  requireFinite(dyn.M, "mass matrix");
  requireFinite(dyn.b, "Coriolis terms");
  requireFinite(dyn.g, "gravity terms");
  const Eigen::MatrixXd& jac = kin.jTask;

  // Jdot u by central differences of the task Jacobian along u
  Eigen::Vector4d jDotU = Eigen::Vector4d::Zero();
  const double un = u.norm();
  if (un > 0.0) {
    const double h = 1e-6 / un;
    const Eigen::MatrixXd jp = armForwardKinematics(model, q + h * u, false).jTask;
    const Eigen::MatrixXd jm = armForwardKinematics(model, q - h * u, false).jTask;
    jDotU = (jp - jm) * u / (2.0 * h);
  }

  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(n, n);
  auto onAcc = [&](const Eigen::MatrixXd& a) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(a.rows(), 2 * n);
    m.leftCols(n) = a;
    return m;
  };
  auto onForce = [&](const Eigen::MatrixXd& a) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(a.rows(), 2 * n);
    m.rightCols(n) = a;
    return m;
  };

  Eigen::VectorXd friction(n);
  for (int i = 0; i < n; ++i) {
    friction(i) = model.frictionViscous(i) * u(i) + model.frictionStatic(i) * std::tanh(u(i) / config.frictionEpsilon);
  }
  Eigen::MatrixXd eom(n, 2 * n);
  eom << -dyn.M, eye;
  const Eigen::VectorXd eomRhs = dyn.b + dyn.g + jac.transpose() * target.force + friction;

  const Eigen::RowVectorXd flow = flowRow(model, q, u);
  Eigen::MatrixXd flowMat = onAcc(dt * flow);
  Eigen::VectorXd flowRhs(1);
  flowRhs << model.pumpFlowMax - flow.dot(u);

  const auto [fLo, fHi] = jointForceLimits(model, q);
  Eigen::MatrixXd forceMat(2 * n, 2 * n);
  forceMat << onForce(eye), onForce(-eye);
  Eigen::VectorXd forceRhs(2 * n);
  forceRhs << fHi, -fLo;

  const auto [vLo, vHi] = jointVelocityLimits(model, q);
  Eigen::MatrixXd velMat(2 * n, 2 * n);
  velMat << onAcc(dt * eye), onAcc(-dt * eye);
  Eigen::VectorXd velRhs(2 * n);
  velRhs << vHi - u, -(vLo - u);

  const Eigen::VectorXd qMin = model.armJointMin().head(n), qMax = model.armJointMax().head(n);
  const double h2 = 0.5 * dt * dt;
  Eigen::MatrixXd posMat(2 * n, 2 * n);
  posMat << onAcc(h2 * eye), onAcc(-h2 * eye);
  Eigen::VectorXd posRhs(2 * n);
  posRhs << qMax - q - dt * u, -(qMin - q - dt * u);

  Eigen::MatrixXd colMat(contacts.size(), 2 * n);
  Eigen::VectorXd colRhs(contacts.size());
  for (std::size_t i = 0; i < contacts.size(); ++i) {
    colMat.row(i) = onAcc(dt * contacts[i].jacobian);
    colRhs(i) = contacts[i].allowedVelocity - contacts[i].jacobian.dot(u);
  }

  const Eigen::MatrixXd jR = jac.bottomRows(2), jT = jac.topRows(2);
  return {
      Task::equality("equations_of_motion", 0, eom, eomRhs),
      Task::inequality("pump_flow", 1, flowMat, flowRhs),
      Task::inequality("force_limits", 2, forceMat, forceRhs),
      Task::inequality("velocity_limits", 3, velMat, velRhs),
      Task::inequality("position_limits", 4, posMat, posRhs),
      Task::inequality("self_collision", 5, colMat, colRhs),
      Task::equality("orientation", 6, onAcc(jR), target.acceleration.tail<2>() - jDotU.tail<2>()),
      Task::equality("position", 7, onAcc(jT), target.acceleration.head<2>() - jDotU.head<2>()),
      Task::equality("damping", 8, onAcc(eye), -config.dampingGain * u),
  };
}

std::vector<Task> buildIkTasks(const RobotModel& model, const ArmControlConfig& config, const Eigen::VectorXd& q,
                               const Eigen::VectorXd& u, const Twist& desired,
                               const std::vector<CollisionContact>& contacts)
{
  const int n = kArmJoints;
  if (q.size() != n || u.size() != n) throw OutOfRange("inverse kinematics needs " + std::to_string(n) + " joints");
  const double dt = config.dt;
  const ArmKinematics kin = armForwardKinematics(model, q);
  requireFinite(kin.jT, "translational Jacobian");
  requireFinite(kin.jR, "rotational Jacobian");
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);

  const Eigen::RowVectorXd flow = flowRow(model, q, u);
  Eigen::VectorXd flowRhs(1);
  flowRhs << model.pumpFlowMax;

  const auto [vLo, vHi] = jointVelocityLimits(model, q);
  Eigen::MatrixXd limMat(2 * n, n);
  limMat << eye, -eye;
  Eigen::VectorXd velRhs(2 * n);
  velRhs << vHi, -vLo;

  const Eigen::VectorXd qMin = model.armJointMin(), qMax = model.armJointMax();
  Eigen::VectorXd posRhs(2 * n);
  posRhs << qMax - q, -(qMin - q);

  Eigen::MatrixXd colMat(contacts.size(), n);
  Eigen::VectorXd colRhs(contacts.size());
  for (std::size_t i = 0; i < contacts.size(); ++i) {
    colMat.row(i) = contacts[i].jacobian;
    colRhs(i) = contacts[i].allowedVelocity;
  }

  return {
      Task::inequality("pump_flow", 0, flow, flowRhs),
      Task::inequality("velocity_limits", 1, limMat, velRhs),
      Task::inequality("position_limits", 2, dt * limMat, posRhs),
      Task::inequality("self_collision", 3, colMat, colRhs),
      Task::equality("orientation", 4, kin.jR, desired.angular),
      Task::equality("position", 5, kin.jT, desired.linear),
      Task::equality("minimum_velocity", 6, eye, Eigen::VectorXd::Zero(n)),
  };
}

ArmCommandId solveArmId(const RobotModel& model, const ArmControlConfig& config, const Eigen::VectorXd& q,
                        const Eigen::VectorXd& u, const IdTarget& target, CollisionMemory* memory)
{
  const int n = kArmForceJoints;
  ArmCommandId out;
  out.tasks = buildIdTasks(model, config, q, u, target, evaluateCollisions(model, config.collisions, q, memory));
  Task& flowTask = out.tasks[taskIndex(out.tasks, "pump_flow")];
  for (int pass = 0;; ++pass) {
    out.solution = solveHqp(out.tasks, 2 * n);
    const Eigen::VectorXd next = u + config.dt * out.solution.x.head(n);
    if (pumpFlow(model, q, next) <= model.pumpFlowMax + 1e-10 || pass >= kMaxFlowRows) break;
    const Eigen::RowVectorXd row = flowRow(model, q, next);
    Eigen::RowVectorXd full = Eigen::RowVectorXd::Zero(2 * n);
    full.head(n) = config.dt * row;
    appendRow(flowTask, full, model.pumpFlowMax - row.dot(u));
  }
  out.acceleration = out.solution.x.head(n);
  out.force = out.solution.x.tail(n);
  return out;
}

ArmCommandIk solveArmIk(const RobotModel& model, const ArmControlConfig& config, const Eigen::VectorXd& q,
                        const Eigen::VectorXd& u, const Twist& desired, CollisionMemory* memory)
{
  ArmCommandIk out;
  out.contacts = evaluateCollisions(model, config.collisions, q, memory);
  out.tasks = buildIkTasks(model, config, q, u, desired, out.contacts);
  Task& flowTask = out.tasks[taskIndex(out.tasks, "pump_flow")];
  for (int pass = 0;; ++pass) {
    out.solution = solveHqp(out.tasks, kArmJoints);
    const Eigen::VectorXd& v = out.solution.x;
    if (pumpFlow(model, q, v) <= model.pumpFlowMax + 1e-10 || pass >= kMaxFlowRows) break;
    appendRow(flowTask, flowRow(model, q, v), model.pumpFlowMax);
  }
  out.velocity = out.solution.x;
  return out;
}

Pose shovelPose(const RobotModel& model, const Eigen::VectorXd& q)
{
  const ArmKinematics k = armForwardKinematics(model, q);
  return {k.position, Rotation::fromMatrix(k.rotation)};
}

void CommandLog::write(double time, const std::vector<Task>& tasks, const HqpSolution& solution)
{
  if (!headerWritten_) {
    out_ << "time";
    for (int i = 0; i < solution.x.size(); ++i) out_ << ",x" << i;
    for (const Task& t : tasks) out_ << ",residual_" << t.name;
    for (const Task& t : tasks) out_ << ",active_" << t.name;
    out_ << '\n';
    headerWritten_ = true;
  }
  out_ << formatDouble(time);
  for (int i = 0; i < solution.x.size(); ++i) out_ << ',' << formatDouble(solution.x(i));
  for (double r : solution.residuals) out_ << ',' << formatDouble(r);
  for (const auto& a : solution.active) out_ << ',' << a.size();
  out_ << '\n';
}

}  // namespace walkex
