#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "walkex/driving.hpp"
#include "walkex/estimator.hpp"
#include "walkex/keyvalue.hpp"
#include "walkex/model.hpp"

namespace walkex {

inline constexpr int kScenarioSchemaVersion = 1;

enum class TerrainKind { Flat, Plane, Heightfield };

/// Ground surface z = h(x, y).
struct Terrain
{
  TerrainKind kind = TerrainKind::Flat;
  Vec3 normal = Vec3::UnitZ();  // plane through the origin
  // heightfield: nx * ny samples, x fastest, bilinear in between, edge values beyond
  Vec2 origin = Vec2::Zero();
  double spacing = 1.0;
  int nx = 0;
  int ny = 0;
  std::vector<double> heights;

  double height(double x, double y) const;
  Vec3 normalAt(double x, double y) const;
  void validate() const;
};

/// Targets switch at the knot time; unspecified channels keep their previous value.
struct ScriptKnot
{
  double time = 0.0;
  std::optional<double> speed;          // [m/s]
  std::optional<SteeringMode> mode;
  std::optional<double> steeringAngle;  // [rad]
  std::optional<double> height;         // base above ground along the normal [m]
  std::optional<double> roll;
  std::optional<double> pitch;
  std::optional<double> turn;           // cabin angle about the turn axis [rad]
};

struct MotionTargets
{
  double speed = 0.0;
  SteeringMode mode = SteeringMode::Front;
  double steeringAngle = 0.0;
  double height = 0.0;
  double roll = 0.0;
  double pitch = 0.0;
  double turn = 0.0;
};

struct MotionScript
{
  std::vector<ScriptKnot> knots;  // sorted by time
  double timeConstant = 0.5;      // first-order lag of every continuous channel [s]

  MotionTargets targetsAt(double t, const MotionTargets& initial) const;
};

struct TimeWindow
{
  double start = 0.0;
  double end = 0.0;
  bool contains(double t) const { return t >= start && t < end; }
};

struct SlipWindow
{
  TimeWindow window;
  double lateral = 0.0;       // sideways sliding of the whole machine [m/s]
  double longitudinal = 0.0;  // wheel spin in excess of the rolling rate [m/s]
};

/// True sensor behaviour. Densities and variances use the filter's units.
struct SensorModel
{
  double accDensity = 1e-4;      // white accelerometer noise [m^2/s^3]
  double gyroDensity = 1e-6;     // [rad^2/s]
  double accBiasWalk = 1e-6;     // bias Brownian motion [m^2/s^5]
  double gyroBiasWalk = 1e-8;    // [rad^2/s^3]
  Vec3 accBias = Vec3::Zero();   // initial true biases
  Vec3 gyroBias = Vec3::Zero();
  double gnssVariance = 4e-4;    // per axis [m^2]
  int gnssPeriod = 1;            // steps between fixes
  double pistonVariance = 1e-8;  // [m^2]
  double wheelSpeedVariance = 1e-4;  // [rad^2/s^2]
  bool quantizeTurn = true;
  std::vector<TimeWindow> gnssOutages;
};

enum class InitialEstimate { Truth, ZeroBias, Sampled };

struct EstimatorSetupConfig
{
  ResidualSetup setup = ResidualSetup::Full;
  InitialEstimate initial = InitialEstimate::ZeroBias;
  // standard deviations of the initial information, also used for sampling
  double sigmaPosition = 0.1;
  double sigmaOrientation = 0.05;
  double sigmaVelocity = 0.1;
  double sigmaAccBias = 0.1;
  double sigmaGyroBias = 0.01;
  NoiseConfig noise;
};

struct EvaluationConfig
{
  double onset = 0.0;       // motion starts
  double converged = 0.0;   // start of the post-convergence window
  double biasWindow = 5.0;  // trailing window for the bias check [s]
};

/**
 * One simulated experiment: terrain, targets, sensors, estimator and the
 * windows used when comparing residual setups.
 */
struct Scenario
{
  std::string name = "scenario";
  std::uint64_t seed = 1;
  double duration = 10.0;
  double dt = 0.01;
  Terrain terrain;
  Vec2 startPosition = Vec2::Zero();
  double startHeading = 0.0;
  MotionTargets start;  // height 0 means the model's nominal stance
  MotionScript script;
  std::vector<SlipWindow> slip;
  SensorModel sensors;
  EstimatorSetupConfig estimator;
  EvaluationConfig evaluation;

  int steps() const;
  void validate() const;
};

/// kind = scenario, schema_version = 1; ConfigError names the offending key.
Scenario parseScenario(const KeyValueDoc& doc);
Scenario loadScenario(const std::string& path);

/// Contact height above ground at the mid stroke of every leg.
double nominalStanceHeight(const RobotModel& model);

/// Kinematic machine pose at one instant.
struct MachinePose
{
  double time = 0.0;
  Vec3 basePosition = Vec3::Zero();  // r_IB
  Rotation baseOrientation;          // Phi_BI
  double turnAngle = 0.0;
  std::array<Vec3, 4> legJoints;
  std::array<Vec3, 4> contacts;      // in I
  Vec3 normal = Vec3::UnitZ();       // terrain normal under the base
  // slip over the step that ended at this pose
  Vec3 slipVelocity = Vec3::Zero();  // lateral sliding in I
  double longitudinalSlip = 0.0;

  Rotation cabinOrientation() const { return Rotation::aboutZ(-turnAngle) * baseOrientation; }
  Vec3 cabinPosition(const RobotModel& model) const
  {
    return basePosition + cabinOrientation().inverseRotate(model.turnAxisOffset);
  }
};

/**
 * Kinematic truth: base pose on the terrain from the driving command and
 * lagged chassis targets, legs solved so every wheel touches the ground and
 * points along its contact velocity.
 */
class TruthIntegrator
{
 public:
  TruthIntegrator(const RobotModel& model, const Scenario& scenario);

  const MachinePose& pose() const { return pose_; }
  /// Advance by one Delta t.
  const MachinePose& advance();
  int step() const { return step_; }

 private:
  void solveLegs(const std::array<Vec3, 4>& directions, bool moving);
  void place();

  const RobotModel& model_;
  const Scenario& scenario_;
  MachinePose pose_;
  MotionTargets targets_;
  MotionTargets lagged_;
  Vec2 xy_;
  double heading_ = 0.0;
  int step_ = 0;
};

/// Brownian motion: per-step increments with variance dt * density on each axis.
class BiasWalk
{
 public:
  BiasWalk(const Vec3& initial, double density, double dt) : value_(initial), scale_(std::sqrt(density * dt)) {}
  const Vec3& value() const { return value_; }
  const Vec3& advance(std::mt19937_64& rng);

 private:
  Vec3 value_;
  double scale_;
  std::normal_distribution<double> normal_;
};

/// Truth at step k together with the exact readings over [t_{k-1}, t_k].
struct TruthSample
{
  double time = 0.0;
  EstimatorState state;           // cabin pose, velocity, current biases, contacts, psi
  MachinePose pose;
  Vec3 specificForce = Vec3::Zero();  // in C
  Vec3 cabinRate = Vec3::Zero();      // in C
  Vec3 baseRate = Vec3::Zero();       // in B
  std::array<double, 4> wheelRates = {0.0, 0.0, 0.0, 0.0};  // rolling plus spin [rad/s]
  std::array<Vec3, 4> pistons;
  Vec3 previousAccBias = Vec3::Zero();   // bias acting on this reading
  Vec3 previousGyroBias = Vec3::Zero();
};

struct SensorRng
{
  explicit SensorRng(std::uint64_t seed);
  std::mt19937_64 imu;
  std::mt19937_64 gnss;
  std::mt19937_64 legs;
  std::normal_distribution<double> normal;
};

/// Noisy readings of one truth sample; step is used for the GNSS rate.
SensorFrame synthesizeSensors(const TruthSample& truth, const Scenario& scenario, const RobotModel& model,
                              SensorRng& rng, int step);

/// Wheel-speed dead reckoning used by the filter for one step.
Vec3 rollingDisplacement(const RobotModel& model, const MachinePose& previous, const Vec3& normal, LegId leg,
                         double wheelRate, double dt);

struct SimulatedStream
{
  std::vector<TruthSample> truth;
  std::vector<SensorFrame> frames;  // frames[0] initializes the filter
};

SimulatedStream simulate(const Scenario& scenario, const RobotModel& model, std::uint64_t seed);

struct ReportRow
{
  double time = 0.0;
  EstimatorState truth;
  EstimatorState estimate;
  double positionSq = 0.0;
  double orientationSq = 0.0;
  double velocitySq = 0.0;
  InnovationNorms innovations;
};

struct ChannelStats
{
  double sse = 0.0;
  double rmse = 0.0;
};

struct InnovationStats
{
  double mean = 0.0;
  double rms = 0.0;
  double max = 0.0;
};

struct RunReport
{
  std::string scenario;
  ResidualSetup setup = ResidualSetup::Full;
  std::uint64_t seed = 0;
  double dt = 0.0;
  std::vector<ReportRow> rows;  // steps 1..N
  ChannelStats position, orientation, velocity, accBias, gyroBias;
  std::array<InnovationStats, 4> innovations;  // imu, gnss, rolling, legs

  void summarize();
  void writeCsv(std::ostream& out) const;
  void writeSummary(std::ostream& out) const;
};

/// Initial filter state for a run; Sampled draws the error from the configured sigmas.
EstimatorState initialEstimate(const Scenario& scenario, const EstimatorState& truth, std::uint64_t seed);
Eigen::VectorXd initialSigma(const Scenario& scenario, ResidualSetup setup);

RunReport evaluate(const Scenario& scenario, const RobotModel& model, const SimulatedStream& stream,
                   ResidualSetup setup, std::uint64_t seed);
/// Simulate and evaluate with the scenario's seed and setup.
RunReport run(const Scenario& scenario, const RobotModel& model);
RunReport run(const Scenario& scenario, const RobotModel& model, std::uint64_t seed);

/// Runs body(0..count-1) on up to workers threads; the first exception is rethrown.
void parallelFor(std::size_t count, unsigned workers, const std::function<void(std::size_t)>& body);

/// Both setups on the same sensor stream.
struct SeedComparison
{
  std::uint64_t seed = 0;
  double preImuGnss = 0.0;  // mean squared position error before onset
  double preFull = 0.0;
  double slipImuGnss = 0.0;  // inside the slip windows
  double slipFull = 0.0;
  double postImuGnss = 0.0;  // after convergence, outside slip windows
  double postFull = 0.0;
  double accBiasError = 0.0;   // relative, trailing window, IMU/GNSS setup
  double gyroBiasError = 0.0;
  double fullAccBiasError = 0.0;
  double fullGyroBiasError = 0.0;
  double sseImuGnss = 0.0;     // whole-run position SSE
  double sseFull = 0.0;

  bool fullBetterBefore() const { return preImuGnss > preFull; }
  bool imuGnssBetterDuringSlip() const { return slipFull > slipImuGnss; }
  bool biasesConverged(double tolerance) const { return accBiasError <= tolerance && gyroBiasError <= tolerance; }
};

struct SetupComparison
{
  struct Windows
  {
    bool before = false;
    bool slip = false;
    bool after = false;
  };
  Windows windows;  // which windows the scenario defines
  // post-convergence RMSE differences below this are not significant [m]
  double afterSignificance = 0.0;
  std::vector<SeedComparison> seeds;
  std::vector<RunReport> imuGnss;  // first seed only unless all were requested
  std::vector<RunReport> full;

  /// Winner per window: "full", "imu_gnss" or "tie" (both below 1e-12 or equal).
  std::string before() const;
  std::string duringSlip() const;
  /// Compares the seed-mean position RMSE after convergence against afterSignificance.
  std::string after() const;
  /// mean over seeds of RMSE_imu_gnss - RMSE_full after convergence [m]
  double afterGap() const;
  std::string verdict() const;
  int countProtocolHolds(double biasTolerance) const;
  void writeSummary(std::ostream& out) const;
  void writeCurves(std::ostream& out) const;  // paired error curves of the first seed
};

SetupComparison compareSetups(const Scenario& scenario, const RobotModel& model,
                              const std::vector<std::uint64_t>& seeds, unsigned workers, bool keepReports = false);

/// seed, seed+1, ..., seed+count-1
std::vector<std::uint64_t> seedRange(std::uint64_t first, int count);

}  // namespace walkex
