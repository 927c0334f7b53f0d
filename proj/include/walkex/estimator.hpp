#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "walkex/lie.hpp"
#include "walkex/model.hpp"

namespace walkex {

enum class ResidualSetup { ImuGnss, Full };

const char* setupName(ResidualSetup setup);
ResidualSetup parseSetup(const std::string& name);

inline int stateDimension(ResidualSetup setup) { return setup == ResidualSetup::Full ? 27 : 15; }

namespace state_index {
inline constexpr int kPosition = 0;
inline constexpr int kOrientation = 3;
inline constexpr int kVelocity = 6;
inline constexpr int kAccBias = 9;
inline constexpr int kGyroBias = 12;
inline constexpr int landmark(int leg) { return 15 + 3 * leg; }
}  // namespace state_index

/// Cabin pose, velocity, IMU biases and the four contact landmarks, all in the inertial frame.
struct EstimatorState
{
  Vec3 position = Vec3::Zero();       // r_IC
  Rotation orientation;               // Phi_CI, maps I to C
  Vec3 velocity = Vec3::Zero();       // v_IC
  Vec3 accBias = Vec3::Zero();        // b_f in C
  Vec3 gyroBias = Vec3::Zero();       // b_w in C
  std::array<Vec3, 4> landmarks = {Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
  double turnAngle = 0.0;             // psi, filtered outside the Gauss-Newton state

  /// Apply a tangent increment of size 15 or 27; orientation via boxplus.
  EstimatorState boxplus(const Eigen::VectorXd& delta) const;
  /// this minus other, first n coordinates.
  Eigen::VectorXd boxminus(const EstimatorState& other, int n) const;
  bool allFinite() const;

  /// Phi_BI = Rz(psi) Phi_CI.
  Rotation chassisOrientation() const;
  /// r_IB = r_IC - Phi_CI^-1(offset).
  Vec3 chassisPosition(const Vec3& turnAxisOffset) const;
};

struct NoiseConfig
{
  Mat3 velocity = Mat3::Identity() * 1e-4;      // Q_v, weakens the IMU on position
  Mat3 acc = Mat3::Identity() * 1e-4;           // Q_f [m^2/s^3]
  Mat3 gyro = Mat3::Identity() * 1e-6;          // Q_w [rad^2/s]
  Mat3 accBias = Mat3::Identity() * 1e-6;       // Q_bf
  Mat3 gyroBias = Mat3::Identity() * 1e-8;      // Q_bw
  std::array<Mat3, 2> gnss = {Mat3::Identity() * 4e-4, Mat3::Identity() * 4e-4};
  Mat3 rolling = Mat3::Identity() * 1e-3;       // Q_p
  Mat3 kinematics = Mat3::Identity() * 1e-4;    // R_s
  Mat3 piston = Mat3::Identity() * 1e-8;        // R_beta, per leg (3 pistons)
  double turnWeight = 0.02;                     // alpha
  double liftoffInflation = 1e6;
  double landmarkInitialVariance = 1e2;

  void validate() const;
};

/// One time step worth of sensor readings; the IMU rates refer to [t_prev, t].
struct SensorFrame
{
  double time = 0.0;
  Vec3 cabinAcc = Vec3::Zero();     // f~_IC in C
  Vec3 cabinGyro = Vec3::Zero();    // w~_IC in C
  Vec3 chassisGyro = Vec3::Zero();  // w~_IB in B
  std::array<std::optional<Vec3>, 2> gnss;
  double turnAngle = 0.0;           // quantized psi~
  std::array<Vec3, 4> pistons = {Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
  std::array<std::optional<double>, 4> wheelSpeeds;
  std::array<bool, 4> contact = {true, true, true, true};
  Vec3 normal = Vec3::UnitZ();      // terrain normal in I

  void validate() const;
};

inline constexpr double kTurnQuantum = 0.92 * 3.14159265358979323846 / 180.0;

/// Gear-teeth reading: magnitude floored to whole teeth, count restarting at zero.
double quantizeTurnAngle(double psi, double step = kTurnQuantum);

/// psi' = alpha psi~ + (1 - alpha)(psi + dt (w_ICz - w_IBz)).
double complementaryTurnFilter(double psiPrev, double psiMeasured, double cabinRateZ, double chassisRateZ, double dt,
                               double alpha);

/// Innovation block with Jacobians w.r.t. the previous and current tangent states and the noise.
struct ResidualBlock
{
  std::string name;
  Eigen::VectorXd y;
  Eigen::MatrixXd jPrev;
  Eigen::MatrixXd jCurr;
  Eigen::MatrixXd noiseJacobian;
  Eigen::MatrixXd noiseCovariance;

  Eigen::MatrixXd covariance() const { return noiseJacobian * noiseCovariance * noiseJacobian.transpose(); }
};

ResidualBlock imuResidual(const EstimatorState& prev, const EstimatorState& curr, const SensorFrame& frame, double dt,
                          const Vec3& gravity, const NoiseConfig& noise, int n);

ResidualBlock gnssResidual(const EstimatorState& curr, const Vec3& fix, const Vec3& leverArm, const Mat3& cov, int n);

/// Contact point prediction expressed with the chassis orientation directly.
struct RollingTerms
{
  Vec3 y;
  Mat3 dOrientation;  // w.r.t. boxplus on Phi_BI
  Mat3 dLandmark;     // w.r.t. p_i
  Mat3 dLandmarkNext; // w.r.t. p'_i
  Mat3 dNoise;
};

RollingTerms rollingInnovation(const Vec3& landmark, const Vec3& landmarkNext, const Rotation& chassisOrientation,
                               const Vec3& forwardB, const Vec3& normalI, double wheelSpeed, double wheelRadius,
                               double dt);

ResidualBlock rollingResidual(const EstimatorState& prev, const EstimatorState& curr, LegId leg, double wheelSpeed,
                              const Vec3& forwardB, const Vec3& normalI, double wheelRadius, double dt,
                              const Mat3& cov, int n);

/// Q_s = R_s + J1 J2 R_beta J2^T J1^T at the measured pistons.
Mat3 contactCovariance(const RobotModel& model, LegId leg, const Vec3& pistons, const Mat3& kinematicCov,
                       const Mat3& pistonCov);

ResidualBlock legOdometryResidual(const EstimatorState& curr, LegId leg, const Vec3& pistons, const Vec3& normalI,
                                  const RobotModel& model, const Mat3& cov, int n);

/// Contact point in I implied by a state and a leg measurement.
Vec3 landmarkFromKinematics(const EstimatorState& state, LegId leg, const Vec3& pistons, const Vec3& normalI,
                            const RobotModel& model);

struct InnovationNorms
{
  double imu = 0.0;
  double gnss = 0.0;
  double rolling = 0.0;
  double legs = 0.0;
};

struct EstimatorOptions
{
  int maxIterations = 5;
  double stepTolerance = 1e-9;
  double damping = 1e-9;
};

/**
 * Two-state implicit filter. Each step minimizes the whitened residuals
 * over (previous, current) with a prior on the previous state, then
 * marginalizes the previous state into the information of the current one.
 */
class Estimator
{
public:
  Estimator(const RobotModel& model, const NoiseConfig& noise, ResidualSetup setup, const EstimatorOptions& options = {});

  /// Start from an initial state with the given standard deviations per tangent coordinate (size n).
  void initialize(const SensorFrame& frame, const EstimatorState& state, const Eigen::VectorXd& sigma);

  /// Landmarks are set from the leg kinematics of this frame.
  void initialize(const SensorFrame& frame, const EstimatorState& state, const Eigen::VectorXd& sigma,
                  bool landmarksFromKinematics);

  const EstimatorState& step(const SensorFrame& frame);

  const EstimatorState& state() const { return state_; }
  const Eigen::MatrixXd& information() const { return information_; }
  Eigen::MatrixXd covariance() const;
  const InnovationNorms& innovations() const { return innovations_; }
  int iterations() const { return iterations_; }
  int dimension() const { return n_; }
  ResidualSetup setup() const { return setup_; }
  bool initialized() const { return initialized_; }

  /// Multiplier on Q_s applied to a leg regardless of its contact flag (used to test deactivation).
  void setLegInflation(LegId leg, double factor) { legInflation_[legIndex(leg)] = factor; }
  /// Drop a leg's odometry residual entirely.
  void setLegEnabled(LegId leg, bool enabled) { legEnabled_[legIndex(leg)] = enabled; }

private:
  std::vector<ResidualBlock> residuals(const EstimatorState& prev, const EstimatorState& curr, const SensorFrame& frame,
                                       double dt) const;
  EstimatorState predict(const EstimatorState& prev, const SensorFrame& frame, double dt) const;
  void resetLandmark(int leg, const SensorFrame& frame);

  const RobotModel& model_;
  NoiseConfig noise_;
  ResidualSetup setup_;
  EstimatorOptions options_;
  int n_;
  bool initialized_ = false;
  EstimatorState state_;
  Eigen::MatrixXd information_;
  SensorFrame lastFrame_;
  InnovationNorms innovations_;
  int iterations_ = 0;
  std::array<double, 4> legInflation_ = {1.0, 1.0, 1.0, 1.0};
  std::array<bool, 4> legEnabled_ = {true, true, true, true};
};

// sensor stream and estimate log

std::vector<std::string> sensorCsvHeader();
void writeSensorCsv(std::ostream& out, const std::vector<SensorFrame>& frames);
void writeSensorJsonl(std::ostream& out, const std::vector<SensorFrame>& frames);
/// Format chosen from the first non-empty line: '{' means JSON lines, otherwise CSV with header.
std::vector<SensorFrame> readSensorStream(std::istream& in, const std::string& source);

std::vector<std::string> estimateLogHeader(ResidualSetup setup);
void writeEstimateRow(std::ostream& out, double time, const Estimator& estimator);

}  // namespace walkex
