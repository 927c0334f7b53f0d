#include "walkex/sim.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Geometry>

#include "walkex/errors.hpp"

namespace walkex {

// ---- terrain ----

double Terrain::height(double x, double y) const
{
  switch (kind) {
    case TerrainKind::Flat: return 0.0;
    case TerrainKind::Plane: return -(normal.x() * x + normal.y() * y) / normal.z();
    case TerrainKind::Heightfield: {
      const double u = std::clamp((x - origin.x()) / spacing, 0.0, nx - 1.0);
      const double v = std::clamp((y - origin.y()) / spacing, 0.0, ny - 1.0);
      const int i = std::min(static_cast<int>(u), nx - 2);
      const int j = std::min(static_cast<int>(v), ny - 2);
      const double a = u - i, b = v - j;
      auto h = [&](int ii, int jj) { return heights[static_cast<std::size_t>(jj) * nx + ii]; };
      return (1 - a) * (1 - b) * h(i, j) + a * (1 - b) * h(i + 1, j) + (1 - a) * b * h(i, j + 1) + a * b * h(i + 1, j + 1);
    }
  }
  return 0.0;
}

Vec3 Terrain::normalAt(double x, double y) const
{
  if (kind == TerrainKind::Flat) return Vec3::UnitZ();
  if (kind == TerrainKind::Plane) return normal;
  const double e = 1e-4 * spacing;
  const double gx = (height(x + e, y) - height(x - e, y)) / (2 * e);
  const double gy = (height(x, y + e) - height(x, y - e)) / (2 * e);
  return Vec3(-gx, -gy, 1.0).normalized();
}

void Terrain::validate() const
{
  if (kind == TerrainKind::Plane) {
    if (!normal.allFinite() || std::abs(normal.norm() - 1.0) > 1e-9 || !(normal.z() > 0.1)) {
      throw ConfigError("terrain.normal", "must be a unit vector pointing upwards (z > 0.1)");
    }
  }
  if (kind == TerrainKind::Heightfield) {
    if (!(spacing > 0.0)) throw ConfigError("terrain.spacing", "must be positive");
    if (nx < 2 || ny < 2) throw ConfigError("terrain.size", "need at least 2 x 2 samples");
    if (heights.size() != static_cast<std::size_t>(nx) * ny) {
      throw ConfigError("terrain.heights", "expected " + std::to_string(nx * ny) + " samples");
    }
    for (double h : heights) {
      if (!std::isfinite(h)) throw ConfigError("terrain.heights", "non-finite sample");
    }
  }
}

// ---- script ----

MotionTargets MotionScript::targetsAt(double t, const MotionTargets& initial) const
{
  MotionTargets m = initial;
  for (const ScriptKnot& k : knots) {
    if (k.time > t) break;
    if (k.speed) m.speed = *k.speed;
    if (k.mode) m.mode = *k.mode;
    if (k.steeringAngle) m.steeringAngle = *k.steeringAngle;
    if (k.height) m.height = *k.height;
    if (k.roll) m.roll = *k.roll;
    if (k.pitch) m.pitch = *k.pitch;
    if (k.turn) m.turn = *k.turn;
  }
  return m;
}

int Scenario::steps() const { return static_cast<int>(std::llround(duration / dt)); }

void Scenario::validate() const
{
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("dt", "must be positive");
  if (!(duration > 0.0) || !std::isfinite(duration)) throw ConfigError("duration", "must be positive");
  if (std::abs(steps() * dt - duration) > 1e-9 * duration) throw ConfigError("duration", "must be a multiple of dt");
  terrain.validate();
  if (!(script.timeConstant > 0.0)) throw ConfigError("motion.time_constant", "must be positive");
  for (std::size_t i = 0; i < script.knots.size(); ++i) {
    const double t = script.knots[i].time;
    if (!(t >= 0.0 && t <= duration)) {
      throw ConfigError("script." + std::to_string(i) + ".t", "knot time outside [0, duration]");
    }
  }
  auto checkWindow = [&](const TimeWindow& w, const std::string& key) {
    if (!(w.start >= 0.0 && w.end > w.start && w.end <= duration)) {
      throw ConfigError(key, "window must satisfy 0 <= start < end <= duration");
    }
  };
  for (std::size_t i = 0; i < slip.size(); ++i) checkWindow(slip[i].window, "slip." + std::to_string(i));
  for (std::size_t i = 0; i < sensors.gnssOutages.size(); ++i) {
    checkWindow(sensors.gnssOutages[i], "gnss_outage." + std::to_string(i));
  }
  const std::pair<const char*, double> variances[] = {
      {"sensors.acc_density", sensors.accDensity},         {"sensors.gyro_density", sensors.gyroDensity},
      {"sensors.acc_bias_walk", sensors.accBiasWalk},      {"sensors.gyro_bias_walk", sensors.gyroBiasWalk},
      {"sensors.gnss_variance", sensors.gnssVariance},     {"sensors.piston_variance", sensors.pistonVariance},
      {"sensors.wheel_speed_variance", sensors.wheelSpeedVariance}};
  for (const auto& [key, v] : variances) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(key, "variance must be finite and >= 0");
  }
  if (sensors.gnssPeriod < 1) throw ConfigError("sensors.gnss_period", "must be >= 1");
  const std::pair<const char*, double> sigmas[] = {
      {"estimator.sigma.position", estimator.sigmaPosition},   {"estimator.sigma.orientation", estimator.sigmaOrientation},
      {"estimator.sigma.velocity", estimator.sigmaVelocity},   {"estimator.sigma.acc_bias", estimator.sigmaAccBias},
      {"estimator.sigma.gyro_bias", estimator.sigmaGyroBias}};
  for (const auto& [key, v] : sigmas) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(key, "must be positive");
  }
  try {
    estimator.noise.validate();
  } catch (const ConfigError& e) {
    // NoiseConfig names its keys noise.*; the scenario calls the block filter.*
    std::string key = e.keyPath();
    std::string what = e.what();
    if (what.rfind(key + ": ", 0) == 0) what = what.substr(key.size() + 2);
    if (key.rfind("noise.", 0) == 0) key = "filter." + key.substr(6);
    if (key.rfind("filter.gnss_", 0) == 0) key = "filter.gnss";
    throw ConfigError(key, what);
  }
  if (!(evaluation.onset >= 0.0 && evaluation.onset <= duration)) throw ConfigError("evaluation.onset", "outside run");
  if (!(evaluation.converged >= 0.0 && evaluation.converged <= duration)) {
    throw ConfigError("evaluation.converged", "outside run");
  }
  if (!(evaluation.biasWindow > 0.0 && evaluation.biasWindow <= duration)) {
    throw ConfigError("evaluation.bias_window", "must lie in (0, duration]");
  }
}

// ---- parsing ----

namespace {

std::vector<std::string> indexedChildren(const KeyValueDoc& doc, const std::string& prefix)
{
  std::vector<std::string> ids = doc.children(prefix);
  for (const std::string& id : ids) {
    if (id.empty() || id.find_first_not_of("0123456789") != std::string::npos) {
      throw ConfigError(prefix + "." + id, "entries must be numbered 0, 1, ...");
    }
  }
  std::sort(ids.begin(), ids.end(), [](const std::string& a, const std::string& b) { return std::stoi(a) < std::stoi(b); });
  return ids;
}

std::optional<double> optionalDouble(const KeyValueDoc& doc, const std::string& key)
{
  if (!doc.has(key)) return std::nullopt;
  return doc.getDouble(key);
}

SteeringMode steeringModeAt(const KeyValueDoc& doc, const std::string& key)
{
  try {
    return parseSteeringMode(doc.getString(key));
  } catch (const ConfigError&) {
    throw ConfigError(key, "expected crab, front, rear or four_wheel");
  }
}

double scalarVariance(const KeyValueDoc& doc, const std::string& key, const Mat3& fallback)
{
  return doc.getDouble(key, fallback(0, 0));
}

std::uint64_t parseSeed(const KeyValueDoc& doc, const std::string& key, std::uint64_t fallback)
{
  if (!doc.has(key)) return fallback;
  const std::string s = doc.getString(key);
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos || s.size() > 19) {
    throw ConfigError(key, "expected a non-negative integer");
  }
  return std::stoull(s);
}

}  // namespace

Scenario parseScenario(const KeyValueDoc& doc)
{
  if (doc.getString("kind") != "scenario") throw ConfigError("kind", "expected 'scenario'");
  if (doc.getInt("schema_version") != kScenarioSchemaVersion) throw ConfigError("schema_version", "unsupported version");
  Scenario s;
  s.name = doc.getString("name", s.name);
  s.seed = parseSeed(doc, "seed", s.seed);
  s.duration = doc.getDouble("duration");
  s.dt = doc.getDouble("dt", s.dt);

  const std::string terrain = doc.getString("terrain.kind", "flat");
  if (terrain == "flat") {
    s.terrain.kind = TerrainKind::Flat;
  } else if (terrain == "plane") {
    s.terrain.kind = TerrainKind::Plane;
    s.terrain.normal = doc.getVec3("terrain.normal");
  } else if (terrain == "heightfield") {
    s.terrain.kind = TerrainKind::Heightfield;
    const auto origin = doc.getList("terrain.origin", 2);
    s.terrain.origin = Vec2(origin[0], origin[1]);
    s.terrain.spacing = doc.getDouble("terrain.spacing");
    const auto size = doc.getList("terrain.size", 2);
    s.terrain.nx = static_cast<int>(size[0]);
    s.terrain.ny = static_cast<int>(size[1]);
    if (s.terrain.nx != size[0] || s.terrain.ny != size[1]) throw ConfigError("terrain.size", "expected integers");
    s.terrain.heights = doc.getList("terrain.heights");
  } else {
    throw ConfigError("terrain.kind", "expected flat, plane or heightfield");
  }

  if (doc.has("start.position")) {
    const auto p = doc.getList("start.position", 2);
    s.startPosition = Vec2(p[0], p[1]);
  }
  s.startHeading = doc.getDouble("start.heading", 0.0);
  s.start.height = doc.getDouble("start.height", 0.0);
  s.start.roll = doc.getDouble("start.roll", 0.0);
  s.start.pitch = doc.getDouble("start.pitch", 0.0);
  s.start.turn = doc.getDouble("start.turn", 0.0);
  if (doc.has("start.steering_mode")) s.start.mode = steeringModeAt(doc, "start.steering_mode");

  s.script.timeConstant = doc.getDouble("motion.time_constant", s.script.timeConstant);
  for (const std::string& id : indexedChildren(doc, "script")) {
    const std::string p = "script." + id + ".";
    ScriptKnot k;
    k.time = doc.getDouble(p + "t");
    k.speed = optionalDouble(doc, p + "speed");
    if (doc.has(p + "steering_mode")) k.mode = steeringModeAt(doc, p + "steering_mode");
    k.steeringAngle = optionalDouble(doc, p + "steering");
    k.height = optionalDouble(doc, p + "height");
    k.roll = optionalDouble(doc, p + "roll");
    k.pitch = optionalDouble(doc, p + "pitch");
    k.turn = optionalDouble(doc, p + "turn");
    if (!s.script.knots.empty() && k.time < s.script.knots.back().time) {
      throw ConfigError(p + "t", "knot times must not decrease");
    }
    s.script.knots.push_back(k);
  }

  for (const std::string& id : indexedChildren(doc, "slip")) {
    const std::string p = "slip." + id + ".";
    SlipWindow w;
    w.window.start = doc.getDouble(p + "start");
    w.window.end = doc.getDouble(p + "end");
    w.lateral = doc.getDouble(p + "lateral", 0.0);
    w.longitudinal = doc.getDouble(p + "longitudinal", 0.0);
    s.slip.push_back(w);
  }

  SensorModel& n = s.sensors;
  n.accDensity = doc.getDouble("sensors.acc_density", n.accDensity);
  n.gyroDensity = doc.getDouble("sensors.gyro_density", n.gyroDensity);
  n.accBiasWalk = doc.getDouble("sensors.acc_bias_walk", n.accBiasWalk);
  n.gyroBiasWalk = doc.getDouble("sensors.gyro_bias_walk", n.gyroBiasWalk);
  n.accBias = doc.getVec3("sensors.acc_bias", n.accBias);
  n.gyroBias = doc.getVec3("sensors.gyro_bias", n.gyroBias);
  n.gnssVariance = doc.getDouble("sensors.gnss_variance", n.gnssVariance);
  n.gnssPeriod = doc.getInt("sensors.gnss_period", n.gnssPeriod);
  n.pistonVariance = doc.getDouble("sensors.piston_variance", n.pistonVariance);
  n.wheelSpeedVariance = doc.getDouble("sensors.wheel_speed_variance", n.wheelSpeedVariance);
  n.quantizeTurn = doc.getBool("sensors.quantize_turn", n.quantizeTurn);
  for (const std::string& id : indexedChildren(doc, "gnss_outage")) {
    const std::string p = "gnss_outage." + id + ".";
    n.gnssOutages.push_back({doc.getDouble(p + "start"), doc.getDouble(p + "end")});
  }

  EstimatorSetupConfig& e = s.estimator;
  if (doc.has("estimator.setup")) {
    try {
      e.setup = parseSetup(doc.getString("estimator.setup"));
    } catch (const std::exception&) {
      throw ConfigError("estimator.setup", "expected imu_gnss or full");
    }
  }
  const std::string initial = doc.getString("estimator.initial", "zero_bias");
  if (initial == "truth") e.initial = InitialEstimate::Truth;
  else if (initial == "zero_bias") e.initial = InitialEstimate::ZeroBias;
  else if (initial == "sampled") e.initial = InitialEstimate::Sampled;
  else throw ConfigError("estimator.initial", "expected truth, zero_bias or sampled");
  e.sigmaPosition = doc.getDouble("estimator.sigma.position", e.sigmaPosition);
  e.sigmaOrientation = doc.getDouble("estimator.sigma.orientation", e.sigmaOrientation);
  e.sigmaVelocity = doc.getDouble("estimator.sigma.velocity", e.sigmaVelocity);
  e.sigmaAccBias = doc.getDouble("estimator.sigma.acc_bias", e.sigmaAccBias);
  e.sigmaGyroBias = doc.getDouble("estimator.sigma.gyro_bias", e.sigmaGyroBias);

  NoiseConfig& q = e.noise;
  const Mat3 I = Mat3::Identity();
  q.velocity = I * scalarVariance(doc, "filter.velocity", q.velocity);
  q.acc = I * scalarVariance(doc, "filter.acc", q.acc);
  q.gyro = I * scalarVariance(doc, "filter.gyro", q.gyro);
  q.accBias = I * scalarVariance(doc, "filter.acc_bias", q.accBias);
  q.gyroBias = I * scalarVariance(doc, "filter.gyro_bias", q.gyroBias);
  const double gnss = scalarVariance(doc, "filter.gnss", q.gnss[0]);
  q.gnss = {I * gnss, I * gnss};
  q.rolling = I * scalarVariance(doc, "filter.rolling", q.rolling);
  q.kinematics = I * scalarVariance(doc, "filter.kinematics", q.kinematics);
  q.piston = I * scalarVariance(doc, "filter.piston", q.piston);
  q.turnWeight = doc.getDouble("filter.turn_weight", q.turnWeight);
  q.liftoffInflation = doc.getDouble("filter.liftoff_inflation", q.liftoffInflation);
  q.landmarkInitialVariance = doc.getDouble("filter.landmark_initial_variance", q.landmarkInitialVariance);

  s.evaluation.onset = doc.getDouble("evaluation.onset", 0.0);
  s.evaluation.converged = doc.getDouble("evaluation.converged", s.evaluation.onset);
  s.evaluation.biasWindow = doc.getDouble("evaluation.bias_window", std::min(s.evaluation.biasWindow, s.duration));

  doc.checkAllConsumed();
  s.validate();
  return s;
}

Scenario loadScenario(const std::string& path) { return parseScenario(KeyValueDoc::load(path)); }

// ---- truth ----

namespace {

Vec3 midJoints(const RobotModel& model, LegId leg)
{
  Vec3 beta;
  for (int k = 0; k < 3; ++k) beta(k) = model.leg(leg).cylinders[k].midStroke();
  return legPistonToJoint(model, leg, beta);
}

Mat3 rotY(double a) { return Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix(); }
Mat3 rotX(double a) { return Eigen::AngleAxisd(a, Vec3::UnitX()).toRotationMatrix(); }
Mat3 rotZ(double a) { return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix(); }

double lag(double y, double target, double gain) { return y + gain * (target - y); }

}  // namespace

double nominalStanceHeight(const RobotModel& model)
{
  double h = 0.0;
  for (LegId leg : kLegIds) h -= legContactVector(model, leg, midJoints(model, leg)).z();
  return 0.25 * h;
}

TruthIntegrator::TruthIntegrator(const RobotModel& model, const Scenario& scenario)
    : model_(model), scenario_(scenario), xy_(scenario.startPosition), heading_(scenario.startHeading)
{
  MotionTargets start = scenario.start;
  if (start.height == 0.0) start.height = nominalStanceHeight(model);
  targets_ = start;
  lagged_ = scenario.script.targetsAt(0.0, start);
  for (int i = 0; i < 4; ++i) pose_.legJoints[i] = midJoints(model, kLegIds[i]);
  place();
}

const MachinePose& TruthIntegrator::advance()
{
  const double dt = scenario_.dt;
  const double t = pose_.time;

  // base velocity in the heading frame from the steering command
  const WheelGeometry geometry = WheelGeometry::fromModel(model_, pose_.legJoints);
  const SteeringResult steer = steeringAngles({lagged_.mode, lagged_.steeringAngle, lagged_.speed}, geometry);
  Vec3 v = Vec3::Zero();
  double omega = 0.0;
  if (steer.icr) {
    omega = lagged_.speed / steer.icr->y();
    v = Vec3(lagged_.speed, -omega * steer.icr->x(), 0.0);
  } else {
    const double a = steer.angles[0];
    v = Vec3(lagged_.speed * std::cos(a), lagged_.speed * std::sin(a), 0.0);
  }
  double lateral = 0.0, longitudinal = 0.0;
  for (const SlipWindow& w : scenario_.slip) {
    if (w.window.contains(t)) {
      lateral += w.lateral;
      longitudinal += w.longitudinal;
    }
  }
  const Mat3 tilt = Eigen::Quaterniond::FromTwoVectors(Vec3::UnitZ(), pose_.normal).toRotationMatrix();
  const Mat3 planar = tilt * rotZ(heading_);
  const Vec3 slipI = planar * Vec3(0.0, lateral, 0.0);
  const Vec3 dp = planar * v + slipI;
  pose_.slipVelocity = slipI;
  pose_.longitudinalSlip = longitudinal;

  xy_ += dt * dp.head<2>();
  heading_ += dt * omega;
  ++step_;
  pose_.time = step_ * dt;

  const double gain = 1.0 - std::exp(-dt / scenario_.script.timeConstant);
  targets_ = scenario_.script.targetsAt(pose_.time, targets_);
  lagged_.speed = lag(lagged_.speed, targets_.speed, gain);
  lagged_.mode = targets_.mode;
  lagged_.steeringAngle = lag(lagged_.steeringAngle, targets_.steeringAngle, gain);
  lagged_.height = lag(lagged_.height, targets_.height, gain);
  lagged_.roll = lag(lagged_.roll, targets_.roll, gain);
  lagged_.pitch = lag(lagged_.pitch, targets_.pitch, gain);
  lagged_.turn = lag(lagged_.turn, targets_.turn, gain);
  place();
  return pose_;
}

void TruthIntegrator::place()
{
  const Vec3 n = scenario_.terrain.normalAt(xy_.x(), xy_.y());
  const Mat3 tilt = Eigen::Quaterniond::FromTwoVectors(Vec3::UnitZ(), n).toRotationMatrix();
  const Mat3 bodyToWorld = tilt * rotZ(heading_) * rotY(lagged_.pitch) * rotX(lagged_.roll);
  pose_.normal = n;
  pose_.baseOrientation = Rotation::fromMatrix(bodyToWorld.transpose());
  pose_.basePosition = Vec3(xy_.x(), xy_.y(), scenario_.terrain.height(xy_.x(), xy_.y())) + lagged_.height * n;
  pose_.turnAngle = lagged_.turn;

  // wheel directions follow the planar velocity field of the next step
  const WheelGeometry geometry = WheelGeometry::fromModel(model_, pose_.legJoints);
  const SteeringResult steer = steeringAngles({lagged_.mode, lagged_.steeringAngle, lagged_.speed}, geometry);
  std::array<Vec3, 4> directions;
  const bool moving = std::abs(lagged_.speed) > 1e-9;
  for (int i = 0; i < 4; ++i) {
    if (steer.icr) {
      const double omega = lagged_.speed / steer.icr->y();
      const Vec2 r = geometry.positions[i] - *steer.icr;
      directions[i] = Vec3(-omega * r.y(), omega * r.x(), 0.0);
    } else {
      const double a = steer.angles[i];
      directions[i] = lagged_.speed * Vec3(std::cos(a), std::sin(a), 0.0);
    }
    if (!moving) directions[i] = Vec3(std::cos(steer.angles[i]), std::sin(steer.angles[i]), 0.0);
  }
  solveLegs(directions, moving);
}

void TruthIntegrator::solveLegs(const std::array<Vec3, 4>& directions, bool /*moving*/)
{
  const Rotation& phi = pose_.baseOrientation;
  const Vec3 nB = phi.rotate(pose_.normal);
  const Terrain& terrain = scenario_.terrain;
  for (int i = 0; i < 4; ++i) {
    const LegId leg = kLegIds[i];
    Vec3 alpha = pose_.legJoints[i];
    const Cylinder& flex = model_.leg(leg).cylinders[1];
    const Cylinder& steering = model_.leg(leg).cylinders[2];
    auto gap = [&](double a1) {
      Vec3 a = alpha;
      a(1) = a1;
      const Vec3 c = pose_.basePosition + phi.inverseRotate(legContactVector(model_, leg, a, nB));
      return c.z() - terrain.height(c.x(), c.y());
    };
    double g = gap(alpha(1));
    for (int it = 0; it < 30 && std::abs(g) > 1e-13; ++it) {
      const double h = 1e-7;
      const double lo = flex.jointMin(), hi = flex.jointMax();
      const double a = std::clamp(alpha(1), lo + h, hi - h);
      const double slope = (gap(a + h) - gap(a - h)) / (2 * h);
      if (slope == 0.0) break;
      alpha(1) = std::clamp(alpha(1) - g / slope, lo, hi);
      g = gap(alpha(1));
    }
    if (std::abs(g) > 1e-9) {
      throw OutOfRange(std::string("leg ") + legName(leg) + " cannot reach the ground (gap " + formatDouble(g) + " m)");
    }

    // steer so that the wheel forward axis, projected into the terrain, is parallel to the contact velocity
    Vec3 d = directions[i] - directions[i].dot(nB) * nB;
    if (d.norm() > 1e-12) {
      d.normalize();
      auto misalignment = [&](double a2) {
        Vec3 a = alpha;
        a(2) = a2;
        Vec3 nu = legWheelForward(model_, leg, a);
        nu -= nu.dot(nB) * nB;
        const double s = nu.dot(d) >= 0.0 ? 1.0 : -1.0;
        return s * nu.cross(d).dot(nB) / nu.norm();
      };
      const double lo = steering.jointMin(), hi = steering.jointMax();
      double f = misalignment(alpha(2));
      for (int it = 0; it < 30 && std::abs(f) > 1e-14; ++it) {
        const double h = 1e-7;
        const double a = std::clamp(alpha(2), lo + h, hi - h);
        const double slope = (misalignment(a + h) - misalignment(a - h)) / (2 * h);
        if (slope == 0.0) break;
        alpha(2) = std::clamp(alpha(2) - f / slope, lo, hi);
        f = misalignment(alpha(2));
      }
    }
    pose_.legJoints[i] = alpha;
    pose_.contacts[i] = pose_.basePosition + phi.inverseRotate(legContactVector(model_, leg, alpha, nB));
  }
}

const Vec3& BiasWalk::advance(std::mt19937_64& rng)
{
  for (int k = 0; k < 3; ++k) value_(k) += scale_ * normal_(rng);
  return value_;
}

// ---- sensors ----

SensorRng::SensorRng(std::uint64_t seed)
{
  std::seed_seq a{seed, std::uint64_t{11}}, b{seed, std::uint64_t{12}}, c{seed, std::uint64_t{13}};
  imu.seed(a);
  gnss.seed(b);
  legs.seed(c);
}

Vec3 rollingDisplacement(const RobotModel& model, const MachinePose& previous, const Vec3& normal, LegId leg,
                         double wheelRate, double dt)
{
  const Rotation& phi = previous.baseOrientation;
  const Vec3 nB = phi.rotate(normal);
  const Vec3 nu = legWheelForward(model, leg, previous.legJoints[legIndex(leg)]);
  const Vec3 nuBar = nu - nu.dot(nB) * nB;
  return dt * phi.inverseRotate(model.wheelRadius * wheelRate * nuBar);
}

SensorFrame synthesizeSensors(const TruthSample& truth, const Scenario& scenario, const RobotModel& model,
                              SensorRng& rng, int step)
{
  const SensorModel& s = scenario.sensors;
  const double dt = scenario.dt;
  auto noise = [&](std::mt19937_64& engine, double sigma) {
    const double x = rng.normal(engine), y = rng.normal(engine), z = rng.normal(engine);
    return Vec3(sigma * x, sigma * y, sigma * z);
  };
  SensorFrame f;
  f.time = truth.time;
  f.cabinAcc = truth.specificForce + truth.previousAccBias + noise(rng.imu, std::sqrt(s.accDensity / dt));
  f.cabinGyro = truth.cabinRate + truth.previousGyroBias + noise(rng.imu, std::sqrt(s.gyroDensity / dt));
  f.chassisGyro = truth.baseRate + noise(rng.imu, std::sqrt(s.gyroDensity / dt));

  bool outage = step % s.gnssPeriod != 0;
  for (const TimeWindow& w : s.gnssOutages) outage = outage || w.contains(truth.time);
  const Vec3 r = truth.state.position;
  for (int a = 0; a < 2; ++a) {
    const Vec3 e = noise(rng.gnss, std::sqrt(s.gnssVariance));
    if (!outage) f.gnss[a] = r + truth.state.orientation.inverseRotate(model.gnssLeverArm[a]) + e;
  }
  f.turnAngle = s.quantizeTurn ? quantizeTurnAngle(truth.state.turnAngle) : truth.state.turnAngle;
  for (int i = 0; i < 4; ++i) {
    f.pistons[i] = truth.pistons[i] + noise(rng.legs, std::sqrt(s.pistonVariance));
    f.wheelSpeeds[i] = truth.wheelRates[i] + std::sqrt(s.wheelSpeedVariance) * rng.normal(rng.legs);
  }
  f.normal = truth.pose.normal;
  return f;
}

// ---- stream ----

SimulatedStream simulate(const Scenario& scenario, const RobotModel& model, std::uint64_t seed)
{
  const int n = scenario.steps();
  const double dt = scenario.dt;
  TruthIntegrator integrator(model, scenario);
  std::seed_seq biasSeed{seed, std::uint64_t{1}};
  std::mt19937_64 biasRng(biasSeed);
  BiasWalk accWalk(scenario.sensors.accBias, scenario.sensors.accBiasWalk, dt);
  BiasWalk gyroWalk(scenario.sensors.gyroBias, scenario.sensors.gyroBiasWalk, dt);
  SensorRng rng(seed);

  SimulatedStream out;
  out.truth.reserve(n + 1);
  out.frames.reserve(n + 1);

  MachinePose previous = integrator.pose();
  MachinePose current = previous;
  MachinePose next = integrator.advance();
  Vec3 previousVelocity = Vec3::Zero();
  for (int k = 0; k <= n; ++k) {
    TruthSample s;
    s.time = k * dt;
    s.pose = current;
    EstimatorState& x = s.state;
    x.position = current.cabinPosition(model);
    x.orientation = current.cabinOrientation();
    x.velocity = (next.cabinPosition(model) - x.position) / dt;
    x.turnAngle = current.turnAngle;
    x.landmarks = current.contacts;
    s.previousAccBias = accWalk.value();
    s.previousGyroBias = gyroWalk.value();
    if (k > 0) {
      x.accBias = accWalk.advance(biasRng);
      x.gyroBias = gyroWalk.advance(biasRng);
      const Rotation cabinPrev = previous.cabinOrientation();
      s.specificForce = cabinPrev.rotate((x.velocity - previousVelocity) / dt - model.gravity);
      s.cabinRate = -boxminus(x.orientation, cabinPrev) / dt;
      s.baseRate = -boxminus(current.baseOrientation, previous.baseOrientation) / dt;
      const Vec3 nB = previous.baseOrientation.rotate(current.normal);
      for (int i = 0; i < 4; ++i) {
        const LegId leg = kLegIds[i];
        const Vec3 nu = legWheelForward(model, leg, previous.legJoints[i]);
        const Vec3 nuBar = nu - nu.dot(nB) * nB;
        const Vec3 moved = previous.baseOrientation.rotate(current.contacts[i] - previous.contacts[i]);
        const double nn = nuBar.squaredNorm();
        s.wheelRates[i] = moved.dot(nuBar) / (model.wheelRadius * dt * nn) +
                          current.longitudinalSlip / (model.wheelRadius * std::sqrt(nn));
      }
    } else {
      x.accBias = accWalk.value();
      x.gyroBias = gyroWalk.value();
      s.specificForce = x.orientation.rotate(-model.gravity);
    }
    for (int i = 0; i < 4; ++i) s.pistons[i] = legJointToPiston(model, kLegIds[i], current.legJoints[i]);

    previousVelocity = x.velocity;
    out.frames.push_back(synthesizeSensors(s, scenario, model, rng, k));
    out.truth.push_back(std::move(s));
    previous = current;
    current = next;
    if (k < n) next = integrator.advance();
  }
  return out;
}

}  // namespace walkex
