#pragma once

#include <array>
#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "walkex/keyvalue.hpp"

namespace walkex {

enum class ValveKind { Servo, PilotMain, JoystickMain };

const char* valveKindName(ValveKind kind);
ValveKind parseValveKind(const std::string& name);

/**
 * Valve and cylinder: dead zone -> transport delay -> first-order lag ->
 * integrator. The lag is slower by (1 + gravityAsymmetry) while the piston
 * moves against gravity. In force mode the piston presses on a stiff load,
 * F = loadStiffness * x.
 */
struct ValvePlantParams
{
  ValveKind kind = ValveKind::Servo;
  double deadZone = 0.0;          // half-width [command]
  double lag = 0.005;             // [s]
  double delay = 0.01;            // [s]
  double flowGain = 0.3;          // [m/s per command]
  double gravityAsymmetry = 0.0;
  int gravitySign = 1;            // direction of positive velocity w.r.t. gravity (+1 with)
  double loadStiffness = 5e7;     // [N/m]
  double commandLimit = 1.0;

  static ValvePlantParams defaults(ValveKind kind);
  void validate() const;
};

class ValvePlant
{
 public:
  explicit ValvePlant(const ValvePlantParams& params, double dt = 1e-3);

  void reset();
  /// Advance one plant step with the valve command held.
  void step(double command);

  double velocity() const { return velocity_; }
  double position() const { return position_; }
  double force() const { return params_.loadStiffness * position_; }
  double dt() const { return dt_; }
  const ValvePlantParams& params() const { return params_; }

  /// Steady-state piston velocity for a constant command.
  double staticVelocity(double command) const;

 private:
  ValvePlantParams params_;
  double dt_;
  std::deque<double> line_;
  double velocity_ = 0.0;
  double position_ = 0.0;
};

inline constexpr std::array<double, 13> kLutVelocityKnots = {-0.3, -0.2, -0.1, -0.05, -0.02, -0.002, 0.0,
                                                             0.002, 0.02, 0.05, 0.1,  0.2, 0.3};

/// Piecewise-linear map from piston velocity to valve command, clamped at the ends.
class LookupTable
{
 public:
  LookupTable() = default;
  LookupTable(std::vector<double> velocities, std::vector<double> commands);

  /// Table from the inverse static map of a plant at the default 13 knots.
  static LookupTable fromPlant(const ValvePlantParams& plant);

  double operator()(double velocity) const;
  const std::vector<double>& velocities() const { return v_; }
  const std::vector<double>& commands() const { return u_; }

 private:
  std::vector<double> v_;
  std::vector<double> u_;
};

struct PiGains
{
  double kp = 0.0;
  double ki = 0.0;
  double outputLimit = 1.0;  // integral clamped to +-outputLimit (command units)
};

/// Velocity loop: command = LUT(v_ref) + PI(v_ref - v_meas).
class LutPI
{
 public:
  LutPI(LookupTable table, const PiGains& gains);

  double update(double vRef, double vMeas, double dt);
  void reset() { integral_ = 0.0; }
  const LookupTable& table() const { return table_; }

 private:
  LookupTable table_;
  PiGains gains_;
  double integral_ = 0.0;
};

struct ForceGains
{
  double kp = 0.0;               // [command/N]
  double ki = 0.0;               // [command/(N s)]
  double outputLimit = 1.0;
  double deadZoneCompensation = 0.0;  // [command]
  double threshold = 500.0;           // |error| [N] above which the compensation is applied
};

/// Force loop: PI plus a dead-zone offset signed by the error.
class ForceController
{
 public:
  explicit ForceController(const ForceGains& gains);

  double update(double fRef, double fMeas, double dt);
  void reset() { integral_ = 0.0; }

 private:
  ForceGains gains_;
  double integral_ = 0.0;
};

/// Anything with a reference input and a measured output sampled at a fixed period.
class LoopUnderTest
{
 public:
  virtual ~LoopUnderTest() = default;
  virtual void reset() = 0;
  /// Advance one control period with the given reference and return the measured output.
  virtual double step(double reference) = 0;
  virtual double period() const = 0;
};

/// Controller at the control period, plant sub-stepped at 1 kHz.
class VelocityLoop : public LoopUnderTest
{
 public:
  VelocityLoop(const ValvePlantParams& plant, LutPI controller, double period = 0.01);
  void reset() override;
  double step(double reference) override;
  double period() const override { return period_; }
  const ValvePlant& plant() const { return plant_; }
  double lastCommand() const { return command_; }

 private:
  ValvePlant plant_;
  LutPI controller_;
  double period_;
  double command_ = 0.0;
};

class ForceLoop : public LoopUnderTest
{
 public:
  ForceLoop(const ValvePlantParams& plant, const ForceGains& gains, double period = 0.01);
  void reset() override;
  double step(double reference) override;
  double period() const override { return period_; }
  const ValvePlant& plant() const { return plant_; }
  double lastCommand() const { return command_; }

 private:
  ValvePlant plant_;
  ForceController controller_;
  double period_;
  double command_ = 0.0;
};

/// Exact discretization of 1 / (s / (2 pi f_c) + 1).
class FirstOrderLoop : public LoopUnderTest
{
 public:
  FirstOrderLoop(double cutoffHz, double period = 0.01);
  void reset() override { y_ = 0.0; }
  double step(double reference) override;
  double period() const override { return period_; }

 private:
  double a_;
  double period_;
  double y_ = 0.0;
};

struct ChirpSpec
{
  double f0 = 0.05;       // [Hz]
  double f1 = 10.0;       // [Hz]
  double amplitude = 0.03;
  double offset = 0.0;
  double duration = 400.0;  // [s]
  int frequencies = 200;    // evaluation points, log spaced
  int segments = 8;         // Welch segments (50% overlap adds segments - 1 more)

  void validate() const;
};

/// Exponential sweep value at time t.
double chirpValue(const ChirpSpec& chirp, double t);

struct BodePoint
{
  double frequency = 0.0;
  double gainDb = 0.0;
  double phaseDeg = 0.0;
  double coherence = 0.0;
};

struct BodeData
{
  std::vector<BodePoint> points;
  std::optional<double> cutoffHz;  // none if the gain stays above -3 dB over the band
  double meanCoherence = 0.0;
};

/**
 * Closed-loop frequency response from a chirp: Welch cross-spectra with a
 * Hann window, evaluated by direct DFT at log-spaced frequencies. Throws
 * InsufficientExcitation if the sweep is shorter than three periods of f0
 * or the mean coherence over the band is below 0.8.
 */
BodeData systemIdentify(LoopUnderTest& loop, const ChirpSpec& chirp);

/// First -3 dB crossing, interpolated linearly in dB over log frequency.
std::optional<double> cutoffFrequency(const std::vector<BodePoint>& points);

struct StepResponse
{
  std::vector<double> time;
  std::vector<double> output;
  std::optional<double> t90;  // first time the output reaches 90% of the step
  double finalValue = 0.0;
};

StepResponse stepResponse(LoopUnderTest& loop, double amplitude, double duration, double offset = 0.0);

/// Sign changes of a sampled signal per second over its last `window` seconds.
double signChangesPerSecond(const std::vector<double>& values, double period, double window);

// ---- plant configuration file ----

struct LoopConfig
{
  std::string name;
  std::string mode;  // "velocity", "force" or "first_order"
  ValvePlantParams plant;
  PiGains velocityGains;
  ForceGains forceGains;
  double cutoffHz = 1.0;  // first_order only
  ChirpSpec chirp;
  double stepAmplitude = 0.03;
  double stepOffset = 0.0;
  double stepDuration = 5.0;
};

/// kind = plants, schema_version = 1, one loop.<name>.* block per loop. ConfigError on an empty list.
std::vector<LoopConfig> parsePlantConfig(const KeyValueDoc& doc);

std::unique_ptr<LoopUnderTest> makeLoop(const LoopConfig& config);

}  // namespace walkex
