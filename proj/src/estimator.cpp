#include "walkex/estimator.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "walkex/errors.hpp"

namespace walkex {

using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace si = state_index;

const char* setupName(ResidualSetup setup) { return setup == ResidualSetup::Full ? "full" : "imu_gnss"; }

ResidualSetup parseSetup(const std::string& name)
{
  if (name == "full" || name == "imu_gnss_roll_leg") return ResidualSetup::Full;
  if (name == "imu_gnss") return ResidualSetup::ImuGnss;
  throw ConfigError("", "unknown residual setup '" + name + "' (expected imu_gnss or full)");
}

// --- state -----------------------------------------------------------------

EstimatorState EstimatorState::boxplus(const VectorXd& delta) const
{
  EstimatorState s = *this;
  s.position += delta.segment<3>(si::kPosition);
  s.orientation = walkex::boxplus(orientation, delta.segment<3>(si::kOrientation));
  s.velocity += delta.segment<3>(si::kVelocity);
  s.accBias += delta.segment<3>(si::kAccBias);
  s.gyroBias += delta.segment<3>(si::kGyroBias);
  if (delta.size() >= 27) {
    for (int i = 0; i < 4; ++i) s.landmarks[i] += delta.segment<3>(si::landmark(i));
  }
  return s;
}

VectorXd EstimatorState::boxminus(const EstimatorState& other, int n) const
{
  VectorXd d(n);
  d.segment<3>(si::kPosition) = position - other.position;
  d.segment<3>(si::kOrientation) = walkex::boxminus(orientation, other.orientation);
  d.segment<3>(si::kVelocity) = velocity - other.velocity;
  d.segment<3>(si::kAccBias) = accBias - other.accBias;
  d.segment<3>(si::kGyroBias) = gyroBias - other.gyroBias;
  if (n >= 27) {
    for (int i = 0; i < 4; ++i) d.segment<3>(si::landmark(i)) = landmarks[i] - other.landmarks[i];
  }
  return d;
}

bool EstimatorState::allFinite() const
{
  bool ok = position.allFinite() && orientation.quaternion().coeffs().allFinite() && velocity.allFinite() &&
            accBias.allFinite() && gyroBias.allFinite() && std::isfinite(turnAngle);
  for (const Vec3& p : landmarks) ok = ok && p.allFinite();
  return ok;
}

Rotation EstimatorState::chassisOrientation() const { return Rotation::aboutZ(turnAngle) * orientation; }

Vec3 EstimatorState::chassisPosition(const Vec3& turnAxisOffset) const
{
  return position - orientation.inverseRotate(turnAxisOffset);
}

namespace {

bool isCovariance(const Mat3& m)
{
  if (!m.allFinite() || (m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + m.cwiseAbs().maxCoeff())) {
    return false;
  }
  Eigen::SelfAdjointEigenSolver<Mat3> es(m);
  return es.eigenvalues().minCoeff() >= 0.0 && m.diagonal().minCoeff() > 0.0;
}

}  // namespace

void NoiseConfig::validate() const
{
  const std::pair<const char*, const Mat3*> all[] = {
      {"velocity", &velocity},    {"acc", &acc},         {"gyro", &gyro},       {"acc_bias", &accBias},
      {"gyro_bias", &gyroBias},   {"gnss_1", &gnss[0]},  {"gnss_2", &gnss[1]},  {"rolling", &rolling},
      {"kinematics", &kinematics}};
  for (const auto& [name, m] : all) {
    if (!isCovariance(*m)) throw ConfigError(std::string("noise.") + name, "covariance must be symmetric PSD with positive diagonal");
  }
  if (!piston.allFinite() || (piston - piston.transpose()).norm() > 1e-12 ||
      Eigen::SelfAdjointEigenSolver<Mat3>(piston).eigenvalues().minCoeff() < 0.0) {
    throw ConfigError("noise.piston", "covariance must be symmetric PSD");
  }
  if (!(turnWeight >= 0.0 && turnWeight <= 1.0)) throw ConfigError("noise.turn_weight", "must lie in [0, 1]");
  if (!(liftoffInflation >= 1.0)) throw ConfigError("noise.liftoff_inflation", "must be >= 1");
  if (!(landmarkInitialVariance > 0.0)) throw ConfigError("noise.landmark_initial_variance", "must be positive");
}

void SensorFrame::validate() const
{
  if (!std::isfinite(time)) throw ConfigError("t", "timestamp not finite");
  if (!cabinAcc.allFinite() || !cabinGyro.allFinite() || !chassisGyro.allFinite() || !std::isfinite(turnAngle)) {
    throw ConfigError("imu", "non-finite reading");
  }
  if (std::abs(normal.norm() - 1.0) > 1e-9) throw ConfigError("n", "terrain normal must be unit length");
}

// --- turn angle ---------------------------------------------------------------

double quantizeTurnAngle(double psi, double step)
{
  const double teeth = std::floor(std::abs(psi) / step);
  return std::copysign(teeth * step, psi);
}

double complementaryTurnFilter(double psiPrev, double psiMeasured, double cabinRateZ, double chassisRateZ, double dt,
                               double alpha)
{
  const double rate = cabinRateZ - chassisRateZ;
  return alpha * psiMeasured + (1.0 - alpha) * (psiPrev + dt * rate);
}

// --- residuals ----------------------------------------------------------------

ResidualBlock imuResidual(const EstimatorState& prev, const EstimatorState& curr, const SensorFrame& frame, double dt,
                          const Vec3& gravity, const NoiseConfig& noise, int n)
{
  ResidualBlock r;
  r.name = "imu";
  r.y.resize(15);
  r.jPrev = MatrixXd::Zero(15, n);
  r.jCurr = MatrixXd::Zero(15, n);
  r.noiseJacobian = MatrixXd::Zero(15, 15);
  r.noiseCovariance = MatrixXd::Zero(15, 15);

  const Mat3 rt = prev.orientation.matrix().transpose();  // C -> I
  const Vec3 f = frame.cabinAcc - prev.accBias;
  const Vec3 phi0 = -dt * (frame.cabinGyro - prev.gyroBias);
  const Rotation predicted = expMap(phi0) * prev.orientation;
  const Vec3 eOri = boxminus(predicted, curr.orientation);
  const double sdt = std::sqrt(dt);
  const Mat3 jlInvE = expJacobianInverse(eOri);
  const Mat3 gamma0 = expJacobian(phi0);
  const Mat3 I = Mat3::Identity();

  r.y.segment<3>(0) = prev.position + dt * prev.velocity - curr.position;
  r.y.segment<3>(3) = eOri;
  r.y.segment<3>(6) = prev.velocity + dt * (rt * f + gravity) - curr.velocity;
  r.y.segment<3>(9) = prev.accBias - curr.accBias;
  r.y.segment<3>(12) = prev.gyroBias - curr.gyroBias;

  r.jPrev.block<3, 3>(0, si::kPosition) = I;
  r.jPrev.block<3, 3>(0, si::kVelocity) = dt * I;
  r.jPrev.block<3, 3>(3, si::kOrientation) = jlInvE * expMap(phi0).matrix();
  r.jPrev.block<3, 3>(3, si::kGyroBias) = dt * jlInvE * gamma0;
  r.jPrev.block<3, 3>(6, si::kVelocity) = I;
  r.jPrev.block<3, 3>(6, si::kOrientation) = dt * rt * skew(f);
  r.jPrev.block<3, 3>(6, si::kAccBias) = -dt * rt;
  r.jPrev.block<3, 3>(9, si::kAccBias) = I;
  r.jPrev.block<3, 3>(12, si::kGyroBias) = I;

  r.jCurr.block<3, 3>(0, si::kPosition) = -I;
  r.jCurr.block<3, 3>(3, si::kOrientation) = -expJacobianInverse(-eOri);
  r.jCurr.block<3, 3>(6, si::kVelocity) = -I;
  r.jCurr.block<3, 3>(9, si::kAccBias) = -I;
  r.jCurr.block<3, 3>(12, si::kGyroBias) = -I;

  // noise order: w_v, w_w, w_f, w_bf, w_bw (matching the innovation rows)
  r.noiseJacobian.block<3, 3>(0, 0) = sdt * I;
  r.noiseJacobian.block<3, 3>(3, 3) = sdt * jlInvE * gamma0;
  r.noiseJacobian.block<3, 3>(6, 6) = -sdt * rt;
  r.noiseJacobian.block<3, 3>(9, 9) = sdt * I;
  r.noiseJacobian.block<3, 3>(12, 12) = sdt * I;
  r.noiseCovariance.block<3, 3>(0, 0) = noise.velocity;
  r.noiseCovariance.block<3, 3>(3, 3) = noise.gyro;
  r.noiseCovariance.block<3, 3>(6, 6) = noise.acc;
  r.noiseCovariance.block<3, 3>(9, 9) = noise.accBias;
  r.noiseCovariance.block<3, 3>(12, 12) = noise.gyroBias;
  return r;
}

ResidualBlock gnssResidual(const EstimatorState& curr, const Vec3& fix, const Vec3& leverArm, const Mat3& cov, int n)
{
  ResidualBlock r;
  r.name = "gnss";
  const Mat3 rt = curr.orientation.matrix().transpose();
  r.y = fix - curr.position - rt * leverArm;
  r.jPrev = MatrixXd::Zero(3, n);
  r.jCurr = MatrixXd::Zero(3, n);
  r.jCurr.block<3, 3>(0, si::kPosition) = -Mat3::Identity();
  r.jCurr.block<3, 3>(0, si::kOrientation) = -rt * skew(leverArm);
  r.noiseJacobian = Mat3::Identity();
  r.noiseCovariance = cov;
  return r;
}

RollingTerms rollingInnovation(const Vec3& landmark, const Vec3& landmarkNext, const Rotation& chassisOrientation,
                               const Vec3& forwardB, const Vec3& normalI, double wheelSpeed, double wheelRadius,
                               double dt)
{
  RollingTerms t;
  const Mat3 rbi = chassisOrientation.matrix();
  const double s = wheelRadius * wheelSpeed;
  const Vec3 nB = rbi * normalI;
  const double along = forwardB.dot(nB);
  t.y = landmark + dt * rbi.transpose() * (s * forwardB) - dt * s * normalI * along - landmarkNext;
  t.dOrientation = dt * rbi.transpose() * skew(s * forwardB) + dt * s * normalI * forwardB.transpose() * skew(nB);
  t.dLandmark = Mat3::Identity();
  t.dLandmarkNext = -Mat3::Identity();
  t.dNoise = std::sqrt(dt) * rbi.transpose();
  return t;
}

ResidualBlock rollingResidual(const EstimatorState& prev, const EstimatorState& curr, LegId leg, double wheelSpeed,
                              const Vec3& forwardB, const Vec3& normalI, double wheelRadius, double dt,
                              const Mat3& cov, int n)
{
  const int i = legIndex(leg);
  const RollingTerms t = rollingInnovation(prev.landmarks[i], curr.landmarks[i], prev.chassisOrientation(), forwardB,
                                           normalI, wheelSpeed, wheelRadius, dt);
  ResidualBlock r;
  r.name = std::string("rolling_") + legName(leg);
  r.y = t.y;
  r.jPrev = MatrixXd::Zero(3, n);
  r.jCurr = MatrixXd::Zero(3, n);
  // perturbing Phi_CI by d perturbs Phi_BI by Rz(psi) d
  r.jPrev.block<3, 3>(0, si::kOrientation) = t.dOrientation * Rotation::aboutZ(prev.turnAngle).matrix();
  r.jPrev.block<3, 3>(0, si::landmark(i)) = t.dLandmark;
  r.jCurr.block<3, 3>(0, si::landmark(i)) = t.dLandmarkNext;
  r.noiseJacobian = t.dNoise;
  r.noiseCovariance = cov;
  return r;
}

Mat3 contactCovariance(const RobotModel& model, LegId leg, const Vec3& pistons, const Mat3& kinematicCov,
                       const Mat3& pistonCov)
{
  const Vec3 alpha = legPistonToJoint(model, leg, pistons);
  const Mat3 j1 = legContactJacobian(model, leg, alpha);
  const Mat3 j2 = legPistonJacobian(model, leg, pistons);
  const Mat3 j = j1 * j2;
  return kinematicCov + j * pistonCov * j.transpose();
}

ResidualBlock legOdometryResidual(const EstimatorState& curr, LegId leg, const Vec3& pistons, const Vec3& normalI,
                                  const RobotModel& model, const Mat3& cov, int n)
{
  const int i = legIndex(leg);
  const Mat3 rz = Rotation::aboutZ(curr.turnAngle).matrix();
  const Mat3 r = curr.orientation.matrix();
  const Mat3 rbi = rz * r;
  const Vec3 alpha = legPistonToJoint(model, leg, pistons);
  const Vec3 s = legContactVector(model, leg, alpha, rbi * normalI);
  const Vec3 rib = curr.chassisPosition(model.turnAxisOffset);
  const Vec3 w = curr.landmarks[i] - curr.position;

  ResidualBlock b;
  b.name = std::string("leg_") + legName(leg);
  b.y = s - rbi * (curr.landmarks[i] - rib);
  b.jPrev = MatrixXd::Zero(3, n);
  b.jCurr = MatrixXd::Zero(3, n);
  b.jCurr.block<3, 3>(0, si::kPosition) = rbi;
  b.jCurr.block<3, 3>(0, si::kOrientation) = rz * skew(r * w) + model.wheelRadius * rz * skew(r * normalI);
  b.jCurr.block<3, 3>(0, si::landmark(i)) = -rbi;
  b.noiseJacobian = -Mat3::Identity();
  b.noiseCovariance = cov;
  return b;
}

Vec3 landmarkFromKinematics(const EstimatorState& state, LegId leg, const Vec3& pistons, const Vec3& normalI,
                            const RobotModel& model)
{
  const Rotation rbi = state.chassisOrientation();
  const Vec3 alpha = legPistonToJoint(model, leg, pistons);
  const Vec3 s = legContactVector(model, leg, alpha, rbi.rotate(normalI));
  return state.chassisPosition(model.turnAxisOffset) + rbi.inverseRotate(s);
}

// --- filter ----------------------------------------------------------------------

Estimator::Estimator(const RobotModel& model, const NoiseConfig& noise, ResidualSetup setup,
                     const EstimatorOptions& options)
    : model_(model), noise_(noise), setup_(setup), options_(options), n_(stateDimension(setup))
{
  noise_.validate();
}

void Estimator::initialize(const SensorFrame& frame, const EstimatorState& state, const VectorXd& sigma)
{
  initialize(frame, state, sigma, setup_ == ResidualSetup::Full);
}

void Estimator::initialize(const SensorFrame& frame, const EstimatorState& state, const VectorXd& sigma,
                           bool landmarksFromKinematics)
{
  if (sigma.size() != n_) throw std::invalid_argument("initial sigma must have the state dimension");
  frame.validate();
  state_ = state;
  information_ = MatrixXd::Zero(n_, n_);
  for (int k = 0; k < n_; ++k) {
    information_(k, k) = std::isfinite(sigma(k)) && sigma(k) > 0.0 ? 1.0 / (sigma(k) * sigma(k)) : 0.0;
  }
  lastFrame_ = frame;
  initialized_ = true;
  if (setup_ == ResidualSetup::Full && landmarksFromKinematics) {
    for (int i = 0; i < 4; ++i) resetLandmark(i, frame);
  }
}

void Estimator::resetLandmark(int leg, const SensorFrame& frame)
{
  const LegId id = kLegIds[leg];
  state_.landmarks[leg] = landmarkFromKinematics(state_, id, frame.pistons[leg], frame.normal, model_);
  const int k = si::landmark(leg);
  information_.middleRows(k, 3).setZero();
  information_.middleCols(k, 3).setZero();
  information_.block<3, 3>(k, k) = Mat3::Identity() / noise_.landmarkInitialVariance;
}

EstimatorState Estimator::predict(const EstimatorState& prev, const SensorFrame& frame, double dt) const
{
  EstimatorState x = prev;
  const Mat3 rt = prev.orientation.matrix().transpose();
  x.position = prev.position + dt * prev.velocity;
  x.velocity = prev.velocity + dt * (rt * (frame.cabinAcc - prev.accBias) + model_.gravity);
  x.orientation = expMap(-dt * (frame.cabinGyro - prev.gyroBias)) * prev.orientation;
  if (setup_ == ResidualSetup::Full) {
    const Mat3 rbi = prev.chassisOrientation().matrix();
    for (int i = 0; i < 4; ++i) {
      const double speed = frame.wheelSpeeds[i].value_or(0.0);
      const Vec3 nu = legWheelForward(model_, kLegIds[i], legPistonToJoint(model_, kLegIds[i], lastFrame_.pistons[i]));
      const Vec3 nB = rbi * frame.normal;
      const Vec3 nuBar = nu - nu.dot(nB) * nB;
      x.landmarks[i] = prev.landmarks[i] + dt * rbi.transpose() * (model_.wheelRadius * speed * nuBar);
    }
  }
  return x;
}

std::vector<ResidualBlock> Estimator::residuals(const EstimatorState& prev, const EstimatorState& curr,
                                                const SensorFrame& frame, double dt) const
{
  std::vector<ResidualBlock> out;
  out.push_back(imuResidual(prev, curr, frame, dt, model_.gravity, noise_, n_));
  for (int k = 0; k < 2; ++k) {
    if (frame.gnss[k]) out.push_back(gnssResidual(curr, *frame.gnss[k], model_.gnssLeverArm[k], noise_.gnss[k], n_));
  }
  if (setup_ != ResidualSetup::Full) return out;
  for (int i = 0; i < 4; ++i) {
    const LegId id = kLegIds[i];
    const Vec3 nu = legWheelForward(model_, id, legPistonToJoint(model_, id, lastFrame_.pistons[i]));
    const double speed = frame.wheelSpeeds[i].value_or(0.0);
    const Mat3 q = frame.wheelSpeeds[i] ? noise_.rolling : Mat3(noise_.rolling * noise_.liftoffInflation);
    out.push_back(rollingResidual(prev, curr, id, speed, nu, frame.normal, model_.wheelRadius, dt, q, n_));
  }
  for (int i = 0; i < 4; ++i) {
    if (!legEnabled_[i]) continue;
    const LegId id = kLegIds[i];
    Mat3 q = contactCovariance(model_, id, frame.pistons[i], noise_.kinematics, noise_.piston);
    q *= legInflation_[i] * (frame.contact[i] ? 1.0 : noise_.liftoffInflation);
    out.push_back(legOdometryResidual(curr, id, frame.pistons[i], frame.normal, model_, q, n_));
  }
  return out;
}

const EstimatorState& Estimator::step(const SensorFrame& frame)
{
  if (!initialized_) throw std::logic_error("estimator used before initialize()");
  frame.validate();
  const double dt = frame.time - lastFrame_.time;
  if (!(dt > 0.0)) throw ConfigError("t", "timestamps must be strictly increasing");

  if (setup_ == ResidualSetup::Full) {
    for (int i = 0; i < 4; ++i) {
      if (frame.contact[i] && !lastFrame_.contact[i]) resetLandmark(i, frame);
    }
  }

  const EstimatorState prior = state_;
  EstimatorState prev = prior;
  EstimatorState curr = predict(prior, frame, dt);
  curr.turnAngle = complementaryTurnFilter(prior.turnAngle, frame.turnAngle, frame.cabinGyro.z(), frame.chassisGyro.z(),
                                           dt, noise_.turnWeight);

  const int n = n_;
  MatrixXd h(2 * n, 2 * n);
  VectorXd g(2 * n);
  auto build = [&](bool norms) {
    h.setZero();
    g.setZero();
    // prior on the previous state
    const VectorXd e = prev.boxminus(prior, n);
    MatrixXd je = MatrixXd::Identity(n, n);
    je.block<3, 3>(si::kOrientation, si::kOrientation) = expJacobianInverse(e.segment<3>(si::kOrientation));
    const MatrixXd ij = information_ * je;
    h.topLeftCorner(n, n) += je.transpose() * ij;
    g.head(n) += ij.transpose() * e;
    InnovationNorms in;
    for (const ResidualBlock& r : residuals(prev, curr, frame, dt)) {
      const Eigen::LLT<MatrixXd> llt(r.covariance());
      if (llt.info() != Eigen::Success) throw SingularInformation("residual '" + r.name + "' has a singular noise covariance");
      MatrixXd j(r.y.size(), 2 * n);
      j << r.jPrev, r.jCurr;
      const MatrixXd wj = llt.solve(j);
      h += j.transpose() * wj;
      g += wj.transpose() * r.y;
      if (norms) {
        const double v = r.y.squaredNorm();
        if (r.name == "imu") in.imu += v;
        else if (r.name == "gnss") in.gnss += v;
        else if (r.name.rfind("rolling", 0) == 0) in.rolling += v;
        else in.legs += v;
      }
    }
    if (norms) {
      innovations_ = {std::sqrt(in.imu), std::sqrt(in.gnss), std::sqrt(in.rolling), std::sqrt(in.legs)};
    }
  };

  iterations_ = 0;
  for (int it = 0; it < options_.maxIterations; ++it) {
    build(false);
    MatrixXd damped = h;
    damped.diagonal().array() += options_.damping;
    const Eigen::LDLT<MatrixXd> ldlt(damped);
    const VectorXd d = ldlt.vectorD();
    if (ldlt.info() != Eigen::Success || d.minCoeff() <= 10.0 * options_.damping) {
      throw SingularInformation("normal equations are rank deficient (unobservable configuration)");
    }
    const VectorXd delta = -ldlt.solve(g);
    prev = prev.boxplus(delta.head(n));
    curr = curr.boxplus(delta.tail(n));
    ++iterations_;
    if (delta.norm() < options_.stepTolerance) break;
  }

  build(true);
  const Eigen::LDLT<MatrixXd> pp(h.topLeftCorner(n, n));
  information_ = h.bottomRightCorner(n, n) - h.bottomLeftCorner(n, n) * pp.solve(h.topRightCorner(n, n));
  information_ = 0.5 * (information_ + information_.transpose());
  state_ = curr;
  lastFrame_ = frame;
  return state_;
}

MatrixXd Estimator::covariance() const
{
  return information_.ldlt().solve(MatrixXd::Identity(n_, n_));
}

}  // namespace walkex
