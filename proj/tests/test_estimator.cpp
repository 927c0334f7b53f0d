#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "walkex/errors.hpp"
#include "walkex/estimator.hpp"

using namespace walkex;
using namespace walkex::testing;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

const RobotModel& model()
{
  static const RobotModel m = RobotModel::defaultModel();
  return m;
}

Vec3 randomPistons(std::mt19937& rng, LegId leg)
{
  Vec3 b;
  for (int k = 0; k < 3; ++k) {
    const Cylinder& c = model().leg(leg).cylinders[k];
    const double margin = 0.05 * (c.strokeMax - c.strokeMin);
    b(k) = uniform(rng, c.strokeMin + margin, c.strokeMax - margin);
  }
  return b;
}

Vec3 midPistons(LegId leg)
{
  Vec3 b;
  for (int k = 0; k < 3; ++k) b(k) = model().leg(leg).cylinders[k].midStroke();
  return b;
}

EstimatorState randomState(std::mt19937& rng)
{
  EstimatorState s;
  s.position = randomVec(rng, 5.0);
  s.orientation = randomRotation(rng);
  s.velocity = randomVec(rng, 1.0);
  s.accBias = randomVec(rng, 0.1);
  s.gyroBias = randomVec(rng, 0.01);
  for (Vec3& p : s.landmarks) p = randomVec(rng, 5.0);
  s.turnAngle = uniform(rng, -3.0, 3.0);
  return s;
}

SensorFrame randomFrame(std::mt19937& rng)
{
  SensorFrame f;
  f.cabinAcc = randomVec(rng, 12.0);
  f.cabinGyro = randomVec(rng, 1.0);
  f.chassisGyro = randomVec(rng, 1.0);
  for (int i = 0; i < 4; ++i) {
    f.pistons[i] = randomPistons(rng, kLegIds[i]);
    f.wheelSpeeds[i] = uniform(rng, -2.0, 2.0);
  }
  f.normal = randomVec(rng, 1.0).normalized();
  return f;
}

/// Finite differences of a residual w.r.t. boxplus perturbations of one state.
MatrixXd stateJacobian(const std::function<VectorXd(const EstimatorState&)>& f, const EstimatorState& x, int n)
{
  return numericJacobian([&](const VectorXd& d) { return f(x.boxplus(d)); }, VectorXd::Zero(n));
}

SensorFrame stationaryFrame(const EstimatorState& truth, double t)
{
  SensorFrame f;
  f.time = t;
  f.cabinAcc = truth.orientation.rotate(-model().gravity);
  f.cabinGyro = Vec3::Zero();
  f.chassisGyro = Vec3::Zero();
  for (int k = 0; k < 2; ++k) f.gnss[k] = truth.position + truth.orientation.inverseRotate(model().gnssLeverArm[k]);
  f.turnAngle = truth.turnAngle;
  for (int i = 0; i < 4; ++i) {
    f.pistons[i] = midPistons(kLegIds[i]);
    f.wheelSpeeds[i] = 0.0;
  }
  return f;
}

VectorXd sigmaFor(ResidualSetup setup)
{
  VectorXd s = VectorXd::Constant(stateDimension(setup), 0.1);
  return s;
}

}  // namespace

TEST(TurnFilter, WeightEndpoints)
{
  EXPECT_EQ(complementaryTurnFilter(0.3, 0.7, 0.5, 0.1, 0.01, 1.0), 0.7);
  EXPECT_EQ(complementaryTurnFilter(0.3, 0.7, 0.0, 0.0, 0.01, 0.0), 0.3);
  EXPECT_NEAR(complementaryTurnFilter(0.3, 0.7, 0.5, 0.1, 0.01, 0.0), 0.3 + 0.004, 1e-15);
}

TEST(TurnFilter, QuantizerSteps)
{
  EXPECT_EQ(quantizeTurnAngle(0.0), 0.0);
  EXPECT_NEAR(quantizeTurnAngle(0.5 * kTurnQuantum), 0.0, 1e-15);
  EXPECT_NEAR(quantizeTurnAngle(2.5 * kTurnQuantum), 2.0 * kTurnQuantum, 1e-15);
  EXPECT_NEAR(quantizeTurnAngle(-2.5 * kTurnQuantum), -2.0 * kTurnQuantum, 1e-15);
  EXPECT_NEAR(kTurnQuantum, 0.016057, 1e-6);
}

TEST(TurnFilter, ConstantRateBeatsQuantization)
{
  // rate 0.1 rad/s, alpha 0.02, 100 Hz for 60 s
  const double dt = 0.01;
  const double rate = 0.1;
  double psi = 0.0;
  double sum = 0.0;
  int count = 0;
  for (int k = 1; k <= 6000; ++k) {
    const double truth = rate * k * dt;
    psi = complementaryTurnFilter(psi, quantizeTurnAngle(truth), rate + 0.02, 0.02, dt, 0.02);
    sum += (psi - truth) * (psi - truth);
    ++count;
  }
  EXPECT_LT(std::sqrt(sum / count), 0.016);
}

TEST(ImuResidual, StationaryTruthGivesZero)
{
  std::mt19937 rng(1);
  EstimatorState s = randomState(rng);
  s.velocity.setZero();
  s.accBias.setZero();
  s.gyroBias.setZero();
  const SensorFrame f = stationaryFrame(s, 0.01);
  const ResidualBlock r = imuResidual(s, s, f, 0.01, model().gravity, NoiseConfig{}, 27);
  EXPECT_LT(r.y.norm(), 1e-12);
}

TEST(ImuResidual, PureRotationStep)
{
  EstimatorState prev;
  SensorFrame f;
  f.cabinAcc = -model().gravity;
  f.cabinGyro = Vec3(0, 0, 1);
  EstimatorState curr = prev;
  curr.orientation = boxplus(Rotation::identity(), Vec3(0, 0, -0.1));
  EXPECT_LT(imuResidual(prev, curr, f, 0.1, model().gravity, NoiseConfig{}, 15).y.norm(), 1e-12);
  curr.orientation = boxplus(Rotation::identity(), Vec3(0, 0, 0.1));
  EXPECT_GT(imuResidual(prev, curr, f, 0.1, model().gravity, NoiseConfig{}, 15).y.norm(), 0.1);
}

TEST(ImuResidual, JacobiansMatchFiniteDifferences)
{
  std::mt19937 rng(2);
  const NoiseConfig noise;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const EstimatorState prev = randomState(rng);
    const EstimatorState curr = randomState(rng);
    const SensorFrame f = randomFrame(rng);
    const double dt = uniform(rng, 0.005, 0.1);
    const ResidualBlock r = imuResidual(prev, curr, f, dt, model().gravity, noise, 27);
    const MatrixXd jp = stateJacobian(
        [&](const EstimatorState& x) { return imuResidual(x, curr, f, dt, model().gravity, noise, 27).y; }, prev, 27);
    const MatrixXd jc = stateJacobian(
        [&](const EstimatorState& x) { return imuResidual(prev, x, f, dt, model().gravity, noise, 27).y; }, curr, 27);
    worst = std::max({worst, maxAbs(jp - r.jPrev), maxAbs(jc - r.jCurr)});

    // noise enters as measurement or state shifts: w_v and w_b shift the current state,
    // w_f and w_w shift the IMU readings by -w / sqrt(dt)
    const double sdt = std::sqrt(dt);
    const MatrixXd jn = numericJacobian(
        [&](const VectorXd& w) {
          EstimatorState c = curr;
          c.position -= sdt * w.segment<3>(0);
          c.accBias -= sdt * w.segment<3>(9);
          c.gyroBias -= sdt * w.segment<3>(12);
          SensorFrame g = f;
          g.cabinGyro -= w.segment<3>(3) / sdt;
          g.cabinAcc -= w.segment<3>(6) / sdt;
          return imuResidual(prev, c, g, dt, model().gravity, noise, 27).y;
        },
        VectorXd::Zero(15));
    worst = std::max(worst, maxAbs(jn - r.noiseJacobian));
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(GnssResidual, ConsistentFixGivesZero)
{
  std::mt19937 rng(3);
  const EstimatorState s = randomState(rng);
  const Vec3 l(0.3, -0.5, 1.2);
  const ResidualBlock r = gnssResidual(s, s.position + s.orientation.inverseRotate(l), l, Mat3::Identity(), 15);
  EXPECT_LT(r.y.norm(), 1e-12);
  const ResidualBlock z = gnssResidual(s, s.position, Vec3::Zero(), Mat3::Identity(), 15);
  EXPECT_EQ(maxAbs(z.jCurr.block<3, 3>(0, state_index::kOrientation)), 0.0);
}

TEST(GnssResidual, JacobiansMatchFiniteDifferences)
{
  std::mt19937 rng(4);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const EstimatorState s = randomState(rng);
    const Vec3 fix = randomVec(rng, 10.0);
    const Vec3 l = randomVec(rng, 2.0);
    const ResidualBlock r = gnssResidual(s, fix, l, Mat3::Identity(), 27);
    const MatrixXd jc = stateJacobian([&](const EstimatorState& x) { return gnssResidual(x, fix, l, Mat3::Identity(), 27).y; }, s, 27);
    const MatrixXd jn = numericJacobian(
        [&](const VectorXd& w) { return gnssResidual(s, fix + w, l, Mat3::Identity(), 27).y; }, VectorXd::Zero(3));
    worst = std::max({worst, maxAbs(jc - r.jCurr), maxAbs(r.jPrev), maxAbs(jn - r.noiseJacobian)});
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(RollingResidual, StationaryWheel)
{
  std::mt19937 rng(5);
  const Vec3 p = randomVec(rng, 3.0);
  const Rotation r = randomRotation(rng);
  const Vec3 nu = randomVec(rng, 1.0).normalized();
  const Vec3 n = randomVec(rng, 1.0).normalized();
  EXPECT_LT(rollingInnovation(p, p, r, nu, n, 0.0, 0.45, 0.01).y.norm(), 1e-15);
  EXPECT_GT(rollingInnovation(p, p + Vec3(0, 0, 1e-3), r, nu, n, 0.0, 0.45, 0.01).y.norm(), 1e-4);
}

TEST(RollingResidual, FlatGroundAdvancesAlongForward)
{
  // chassis yawed, nu in the ground plane: the projection does nothing
  const Rotation r = Rotation::aboutZ(0.7);
  const Vec3 nu(1, 0, 0);
  const Vec3 n = Vec3::UnitZ();
  const Vec3 p(1, 2, 0);
  const double dt = 0.01, speed = 2.0, rho = 0.45;
  const Vec3 expected = p + dt * rho * speed * r.inverseRotate(nu);
  EXPECT_LT(rollingInnovation(p, expected, r, nu, n, speed, rho, dt).y.norm(), 1e-15);
}

TEST(RollingResidual, PrintedFormEqualsProjectedForm)
{
  std::mt19937 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const Rotation r = randomRotation(rng);
    const Vec3 nu = randomVec(rng, 1.0).normalized();
    const Vec3 n = randomVec(rng, 1.0).normalized();
    const Vec3 p = randomVec(rng, 3.0);
    const double s = uniform(rng, -2, 2) * 0.45, dt = 0.01;
    const Vec3 nB = r.rotate(n);
    const Vec3 nuBar = nu - nu.dot(nB) * nB;
    const Vec3 next = p + dt * r.inverseRotate(s * nuBar);
    EXPECT_LT(rollingInnovation(p, next, r, nu, n, s / 0.45, 0.45, dt).y.norm(), 1e-13);
  }
}

TEST(RollingResidual, JacobiansMatchFiniteDifferences)
{
  std::mt19937 rng(7);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Rotation r = randomRotation(rng);
    const Vec3 nu = randomVec(rng, 1.0).normalized();
    const Vec3 n = randomVec(rng, 1.0).normalized();
    const Vec3 p = randomVec(rng, 3.0);
    const Vec3 q = randomVec(rng, 3.0);
    const double speed = uniform(rng, -2.0, 2.0), dt = uniform(rng, 0.005, 0.1);
    const RollingTerms t = rollingInnovation(p, q, r, nu, n, speed, 0.45, dt);
    const MatrixXd jo = numericJacobian(
        [&](const VectorXd& d) { return VectorXd(rollingInnovation(p, q, boxplus(r, d), nu, n, speed, 0.45, dt).y); },
        VectorXd::Zero(3));
    const MatrixXd jp = numericJacobian(
        [&](const VectorXd& d) { return VectorXd(rollingInnovation(p + Vec3(d), q, r, nu, n, speed, 0.45, dt).y); },
        VectorXd::Zero(3));
    const MatrixXd jq = numericJacobian(
        [&](const VectorXd& d) { return VectorXd(rollingInnovation(p, q + Vec3(d), r, nu, n, speed, 0.45, dt).y); },
        VectorXd::Zero(3));
    // contact velocity noise: p' = p + dt R^T (rho phi nu_bar + w / sqrt(dt)), written out here
    const MatrixXd jw = numericJacobian(
        [&](const VectorXd& w) {
          const Mat3 rt = r.matrix().transpose();
          const Vec3 nB = r.rotate(n);
          const Vec3 nuBar = nu - nu.dot(nB) * nB;
          return VectorXd(p + dt * rt * (0.45 * speed * nuBar + Vec3(w) / std::sqrt(dt)) - q);
        },
        VectorXd::Zero(3));
    worst = std::max({worst, maxAbs(jo - t.dOrientation), maxAbs(jp - t.dLandmark), maxAbs(jq - t.dLandmarkNext),
                      maxAbs(jw - t.dNoise)});

    // state-level chain through Phi_BI = Rz(psi) Phi_CI
    EstimatorState prev = randomState(rng);
    EstimatorState curr = randomState(rng);
    const LegId leg = kLegIds[trial % 4];
    const ResidualBlock b = rollingResidual(prev, curr, leg, speed, nu, n, 0.45, dt, Mat3::Identity(), 27);
    const MatrixXd sp = stateJacobian(
        [&](const EstimatorState& x) { return rollingResidual(x, curr, leg, speed, nu, n, 0.45, dt, Mat3::Identity(), 27).y; },
        prev, 27);
    const MatrixXd sc = stateJacobian(
        [&](const EstimatorState& x) { return rollingResidual(prev, x, leg, speed, nu, n, 0.45, dt, Mat3::Identity(), 27).y; },
        curr, 27);
    worst = std::max({worst, maxAbs(sp - b.jPrev), maxAbs(sc - b.jCurr)});
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(LegResidual, ConsistentStateGivesZero)
{
  std::mt19937 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    EstimatorState s = randomState(rng);
    const LegId leg = kLegIds[trial % 4];
    const Vec3 beta = randomPistons(rng, leg);
    const Vec3 n = randomVec(rng, 1.0).normalized();
    s.landmarks[legIndex(leg)] = landmarkFromKinematics(s, leg, beta, n, model());
    EXPECT_LT(legOdometryResidual(s, leg, beta, n, model(), Mat3::Identity(), 27).y.norm(), 1e-12);
  }
}

TEST(LegResidual, JacobiansMatchFiniteDifferences)
{
  std::mt19937 rng(9);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const EstimatorState s = randomState(rng);
    const LegId leg = kLegIds[trial % 4];
    const Vec3 beta = randomPistons(rng, leg);
    const Vec3 n = randomVec(rng, 1.0).normalized();
    const ResidualBlock r = legOdometryResidual(s, leg, beta, n, model(), Mat3::Identity(), 27);
    const MatrixXd jc = stateJacobian(
        [&](const EstimatorState& x) { return legOdometryResidual(x, leg, beta, n, model(), Mat3::Identity(), 27).y; }, s, 27);
    worst = std::max({worst, maxAbs(jc - r.jCurr), maxAbs(r.jPrev)});
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(LegResidual, PerfectEncodersLeaveKinematicCovariance)
{
  const Mat3 rs = Vec3(1e-4, 2e-4, 3e-4).asDiagonal();
  for (LegId leg : kLegIds) {
    EXPECT_EQ(maxAbs(contactCovariance(model(), leg, midPistons(leg), rs, Mat3::Zero()) - rs), 0.0);
  }
}

TEST(LegResidual, CovarianceMatchesMonteCarlo)
{
  std::mt19937 rng(10);
  std::normal_distribution<double> g(0.0, 1.0);
  const Mat3 rBeta = Vec3(4e-6, 1e-5, 2.5e-5).asDiagonal();  // 2, 3.2, 5 mm
  const Mat3 rs = Mat3::Identity() * 1e-6;
  for (LegId leg : kLegIds) {
    const Vec3 beta = randomPistons(rng, leg);
    const Vec3 mean = legContactVector(model(), leg, legPistonToJoint(model(), leg, beta));
    const int samples = 100000;
    Mat3 cov = Mat3::Zero();
    for (int k = 0; k < samples; ++k) {
      Vec3 b = beta;
      for (int c = 0; c < 3; ++c) b(c) += std::sqrt(rBeta(c, c)) * g(rng);
      Vec3 d = legContactVector(model(), leg, legPistonToJoint(model(), leg, b)) - mean;
      for (int c = 0; c < 3; ++c) d(c) += std::sqrt(rs(c, c)) * g(rng);
      cov += d * d.transpose();
    }
    cov /= samples;
    const Mat3 q = contactCovariance(model(), leg, beta, rs, rBeta);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(cov(c, c) / q(c, c), 1.0, 0.1) << legName(leg) << " axis " << c;
  }
}

TEST(Filter, StationaryZeroNoiseStaysAtTruth)
{
  for (ResidualSetup setup : {ResidualSetup::ImuGnss, ResidualSetup::Full}) {
    std::mt19937 rng(11);
    EstimatorState truth = randomState(rng);
    truth.velocity.setZero();
    truth.accBias.setZero();
    truth.gyroBias.setZero();
    truth.turnAngle = 0.0;
    Estimator est(model(), NoiseConfig{}, setup);
    est.initialize(stationaryFrame(truth, 0.0), truth, sigmaFor(setup));
    for (int i = 0; i < 4; ++i) truth.landmarks[i] = est.state().landmarks[i];
    double worst = 0.0;
    for (int k = 1; k <= 1000; ++k) {
      est.step(stationaryFrame(truth, 0.01 * k));
      worst = std::max(worst, est.state().boxminus(truth, stateDimension(setup)).cwiseAbs().maxCoeff());
    }
    EXPECT_LT(worst, 1e-9) << setupName(setup);
  }
}

namespace {

std::vector<SensorFrame> noisyStationaryStream(std::mt19937& rng, const EstimatorState& truth, int steps)
{
  std::normal_distribution<double> g(0.0, 1.0);
  auto nv = [&](double s) { return Vec3(s * g(rng), s * g(rng), s * g(rng)); };
  std::vector<SensorFrame> out;
  for (int k = 0; k <= steps; ++k) {
    SensorFrame f = stationaryFrame(truth, 0.01 * k);
    f.cabinAcc += nv(0.05);
    f.cabinGyro += nv(0.005);
    for (auto& fix : f.gnss) *fix += nv(0.02);
    for (int i = 0; i < 4; ++i) {
      f.pistons[i] += nv(1e-3);
      f.wheelSpeeds[i] = 0.01 * g(rng);
    }
    out.push_back(f);
  }
  return out;
}

EstimatorState runStream(Estimator& est, const std::vector<SensorFrame>& frames, const EstimatorState& init)
{
  VectorXd sigma = VectorXd::Constant(est.dimension(), 0.1);
  est.initialize(frames.front(), init, sigma);
  for (std::size_t k = 1; k < frames.size(); ++k) est.step(frames[k]);
  return est.state();
}

}  // namespace

TEST(Filter, TranslationEquivariance)
{
  std::mt19937 rng(12);
  EstimatorState truth = randomState(rng);
  truth.velocity.setZero();
  truth.turnAngle = 0.0;
  const auto frames = noisyStationaryStream(rng, truth, 200);
  const Vec3 shift(123.0, -45.0, 6.5);
  auto shifted = frames;
  for (SensorFrame& f : shifted)
    for (auto& fix : f.gnss) *fix += shift;
  EstimatorState init = truth;
  init.accBias.setZero();
  init.gyroBias.setZero();
  EstimatorState initShifted = init;
  initShifted.position += shift;
  for (ResidualSetup setup : {ResidualSetup::ImuGnss, ResidualSetup::Full}) {
    Estimator a(model(), NoiseConfig{}, setup);
    Estimator b(model(), NoiseConfig{}, setup);
    const EstimatorState sa = runStream(a, frames, init);
    EstimatorState sb = runStream(b, shifted, initShifted);
    sb.position -= shift;
    for (Vec3& p : sb.landmarks) p -= shift;
    EXPECT_LT(sb.boxminus(sa, stateDimension(setup)).cwiseAbs().maxCoeff(), 1e-7) << setupName(setup);
  }
}

TEST(Filter, InflatedLegEqualsRemovedLeg)
{
  std::mt19937 rng(13);
  EstimatorState truth = randomState(rng);
  truth.velocity.setZero();
  truth.turnAngle = 0.0;
  const auto frames = noisyStationaryStream(rng, truth, 200);
  Estimator inflated(model(), NoiseConfig{}, ResidualSetup::Full);
  Estimator removed(model(), NoiseConfig{}, ResidualSetup::Full);
  Estimator normal(model(), NoiseConfig{}, ResidualSetup::Full);
  inflated.setLegInflation(LegId::LH, 1e6);
  removed.setLegEnabled(LegId::LH, false);
  const EstimatorState a = runStream(inflated, frames, truth);
  const EstimatorState b = runStream(removed, frames, truth);
  const EstimatorState c = runStream(normal, frames, truth);
  // the deactivated leg's own landmark is free either way; compare everything else
  VectorXd effect = c.boxminus(b, 27);
  VectorXd diff = a.boxminus(b, 27);
  const int k = state_index::landmark(legIndex(LegId::LH));
  effect.segment<3>(k).setZero();
  diff.segment<3>(k).setZero();
  ASSERT_GT(effect.norm(), 1e-5);
  EXPECT_LT(diff.norm() / b.boxminus(EstimatorState{}, 27).norm(), 1e-6);
  EXPECT_LT(diff.norm(), 1e-2 * effect.norm());
}

TEST(Filter, OrientationStaysUnitNorm)
{
  // spinning in place for 1000 s, GNSS at 10 Hz
  EstimatorState truth;
  Estimator est(model(), NoiseConfig{}, ResidualSetup::ImuGnss);
  est.initialize(stationaryFrame(truth, 0.0), truth, sigmaFor(ResidualSetup::ImuGnss));
  double worst = 0.0;
  for (int k = 1; k <= 100000; ++k) {
    const Vec3 rate(0.3 * std::sin(0.01 * k), 0.2, -0.5);
    SensorFrame f = stationaryFrame(truth, 0.01 * k);
    truth.orientation = expMap(-0.01 * rate) * truth.orientation;
    f.cabinGyro = rate;
    for (int a = 0; a < 2; ++a) {
      if (k % 10) f.gnss[a].reset();
      else f.gnss[a] = truth.position + truth.orientation.inverseRotate(model().gnssLeverArm[a]);
    }
    est.step(f);
    worst = std::max(worst, std::abs(est.state().orientation.quaternion().norm() - 1.0));
  }
  EXPECT_LT(worst, 1e-9);
  EXPECT_LT(boxminus(est.state().orientation, truth.orientation).norm(), 1e-6);
}

TEST(Filter, UnobservableThrows)
{
  EstimatorState truth;
  Estimator est(model(), NoiseConfig{}, ResidualSetup::ImuGnss);
  SensorFrame f = stationaryFrame(truth, 0.0);
  f.gnss[0].reset();
  f.gnss[1].reset();
  est.initialize(f, truth, VectorXd::Constant(15, std::numeric_limits<double>::infinity()));
  f.time = 0.01;
  EXPECT_THROW(est.step(f), SingularInformation);
}

TEST(Filter, RejectsNonIncreasingTime)
{
  EstimatorState truth;
  Estimator est(model(), NoiseConfig{}, ResidualSetup::ImuGnss);
  const SensorFrame f = stationaryFrame(truth, 1.0);
  est.initialize(f, truth, sigmaFor(ResidualSetup::ImuGnss));
  EXPECT_THROW(est.step(f), ConfigError);
}

TEST(SensorStream, CsvAndJsonRoundTrip)
{
  std::mt19937 rng(15);
  std::vector<SensorFrame> frames;
  for (int k = 0; k < 5; ++k) {
    SensorFrame f = randomFrame(rng);
    f.time = 0.1 * k;
    if (k % 2) f.gnss[0] = randomVec(rng, 10.0);
    if (k == 3) f.wheelSpeeds[2].reset();
    f.contact[1] = k != 4;
    frames.push_back(f);
  }
  for (int format = 0; format < 2; ++format) {
    std::stringstream ss;
    if (format == 0) writeSensorCsv(ss, frames);
    else writeSensorJsonl(ss, frames);
    const auto back = readSensorStream(ss, "mem");
    ASSERT_EQ(back.size(), frames.size());
    for (std::size_t k = 0; k < frames.size(); ++k) {
      EXPECT_EQ(back[k].time, frames[k].time);
      EXPECT_EQ(back[k].cabinAcc, frames[k].cabinAcc);
      EXPECT_EQ(back[k].gnss[0].has_value(), frames[k].gnss[0].has_value());
      EXPECT_FALSE(back[k].gnss[1].has_value());
      EXPECT_EQ(back[k].wheelSpeeds[2].has_value(), frames[k].wheelSpeeds[2].has_value());
      EXPECT_EQ(back[k].contact[1], frames[k].contact[1]);
      EXPECT_EQ(back[k].pistons[3], frames[k].pistons[3]);
      EXPECT_EQ(back[k].normal, frames[k].normal);
    }
  }
}

TEST(SensorStream, UnknownColumnNamed)
{
  std::stringstream ss("t,f_x,bogus\n0,1,2\n");
  try {
    readSensorStream(ss, "s.csv");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("bogus"), std::string::npos);
  }
}
