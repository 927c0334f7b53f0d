#include "walkex/actuation.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include "walkex/errors.hpp"

namespace walkex {

namespace {

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

const char* valveKindName(ValveKind kind)
{
  switch (kind) {
    case ValveKind::Servo: return "servo";
    case ValveKind::PilotMain: return "pilot_main";
    case ValveKind::JoystickMain: return "joystick_main";
  }
  return "?";
}

ValveKind parseValveKind(const std::string& name)
{
  for (ValveKind k : {ValveKind::Servo, ValveKind::PilotMain, ValveKind::JoystickMain}) {
    if (name == valveKindName(k)) return k;
  }
  throw ConfigError("", "unknown valve kind '" + name + "'");
}

ValvePlantParams ValvePlantParams::defaults(ValveKind kind)
{
  ValvePlantParams p;
  p.kind = kind;
  switch (kind) {
    case ValveKind::Servo:
      break;
    case ValveKind::PilotMain:
      p.deadZone = 0.2;
      p.lag = 0.3;
      p.delay = 0.2;
      p.flowGain = 0.375;
      p.gravityAsymmetry = 0.25;
      p.loadStiffness = 5e7;
      break;
    case ValveKind::JoystickMain:
      p.deadZone = 0.25;
      p.lag = 0.32;
      p.delay = 0.22;
      p.flowGain = 0.4;
      p.gravityAsymmetry = 0.25;
      p.loadStiffness = 5e7;
      break;
  }
  return p;
}

void ValvePlantParams::validate() const
{
  if (!(deadZone >= 0.0)) throw ConfigError("dead_zone", "must be >= 0");
  if (kind == ValveKind::Servo && deadZone != 0.0) throw ConfigError("dead_zone", "servo valves have no overlap");
  if (!(lag >= 0.0)) throw ConfigError("lag", "must be >= 0");
  if (!(delay >= 0.0)) throw ConfigError("delay", "must be >= 0");
  if (!(flowGain > 0.0)) throw ConfigError("flow_gain", "must be positive");
  if (!(gravityAsymmetry >= 0.0)) throw ConfigError("gravity_asymmetry", "must be >= 0");
  if (gravitySign != 1 && gravitySign != -1) throw ConfigError("gravity_sign", "must be +1 or -1");
  if (!(loadStiffness > 0.0)) throw ConfigError("load_stiffness", "must be positive");
  if (!(commandLimit > deadZone)) throw ConfigError("command_limit", "must exceed the dead zone");
}

ValvePlant::ValvePlant(const ValvePlantParams& params, double dt) : params_(params), dt_(dt)
{
  params_.validate();
  if (!(dt > 0.0)) throw ConfigError("dt", "must be positive");
  reset();
}

void ValvePlant::reset()
{
  const auto n = static_cast<std::size_t>(std::lround(params_.delay / dt_));
  line_.assign(n, 0.0);
  velocity_ = 0.0;
  position_ = 0.0;
}

double ValvePlant::staticVelocity(double command) const
{
  const double u = std::clamp(command, -params_.commandLimit, params_.commandLimit);
  return params_.flowGain * sign(u) * std::max(std::abs(u) - params_.deadZone, 0.0);
}

void ValvePlant::step(double command)
{
  double target = staticVelocity(command);
  if (!line_.empty()) {
    line_.push_back(target);
    target = line_.front();
    line_.pop_front();
  }
  const double direction = target != 0.0 ? sign(target) : sign(velocity_);
  const double tau = direction * params_.gravitySign < 0.0 ? params_.lag * (1.0 + params_.gravityAsymmetry) : params_.lag;
  if (tau <= 0.0) velocity_ = target;
  else velocity_ += (target - velocity_) * (1.0 - std::exp(-dt_ / tau));
  position_ += dt_ * velocity_;
}

LookupTable::LookupTable(std::vector<double> velocities, std::vector<double> commands)
    : v_(std::move(velocities)), u_(std::move(commands))
{
  if (v_.size() != u_.size() || v_.size() < 2) throw ConfigError("lut", "needs at least two matching pairs");
  for (std::size_t i = 1; i < v_.size(); ++i) {
    if (!(v_[i] > v_[i - 1]) || !(u_[i] > u_[i - 1])) throw ConfigError("lut", "must be strictly monotone");
  }
}

LookupTable LookupTable::fromPlant(const ValvePlantParams& p)
{
  std::vector<double> v(kLutVelocityKnots.begin(), kLutVelocityKnots.end());
  std::vector<double> u;
  for (double x : v) u.push_back(x == 0.0 ? 0.0 : sign(x) * (p.deadZone + std::abs(x) / p.flowGain));
  return {v, u};
}

double LookupTable::operator()(double velocity) const
{
  if (velocity <= v_.front()) return u_.front();
  if (velocity >= v_.back()) return u_.back();
  const auto it = std::upper_bound(v_.begin(), v_.end(), velocity);
  const std::size_t i = static_cast<std::size_t>(it - v_.begin());
  const double s = (velocity - v_[i - 1]) / (v_[i] - v_[i - 1]);
  return u_[i - 1] + s * (u_[i] - u_[i - 1]);
}

LutPI::LutPI(LookupTable table, const PiGains& gains) : table_(std::move(table)), gains_(gains)
{
  if (gains.kp < 0.0 || gains.ki < 0.0 || gains.outputLimit < 0.0) throw ConfigError("gains", "must be >= 0");
}

double LutPI::update(double vRef, double vMeas, double dt)
{
  if (!(dt > 0.0)) throw ConfigError("dt", "must be positive");
  const double e = vRef - vMeas;
  integral_ = std::clamp(integral_ + gains_.ki * e * dt, -gains_.outputLimit, gains_.outputLimit);
  return table_(vRef) + gains_.kp * e + integral_;
}

ForceController::ForceController(const ForceGains& gains) : gains_(gains)
{
  if (gains.kp < 0.0 || gains.ki < 0.0 || gains.outputLimit < 0.0 || gains.deadZoneCompensation < 0.0 ||
      gains.threshold < 0.0) {
    throw ConfigError("gains", "must be >= 0");
  }
}

double ForceController::update(double fRef, double fMeas, double dt)
{
  if (!(dt > 0.0)) throw ConfigError("dt", "must be positive");
  const double e = fRef - fMeas;
  integral_ = std::clamp(integral_ + gains_.ki * e * dt, -gains_.outputLimit, gains_.outputLimit);
  const double compensation = std::abs(e) > gains_.threshold ? sign(e) * gains_.deadZoneCompensation : 0.0;
  return gains_.kp * e + integral_ + compensation;
}

namespace {

constexpr double kPlantDt = 1e-3;

int substeps(double period)
{
  const long n = std::lround(period / kPlantDt);
  if (n < 1 || std::abs(n * kPlantDt - period) > 1e-12) {
    throw ConfigError("period", "must be a positive multiple of 1 ms");
  }
  return static_cast<int>(n);
}

}  // namespace

VelocityLoop::VelocityLoop(const ValvePlantParams& plant, LutPI controller, double period)
    : plant_(plant, kPlantDt), controller_(std::move(controller)), period_(period)
{
  substeps(period);
}

void VelocityLoop::reset()
{
  plant_.reset();
  controller_.reset();
  command_ = 0.0;
}

double VelocityLoop::step(double reference)
{
  command_ = controller_.update(reference, plant_.velocity(), period_);
  for (int i = 0, n = substeps(period_); i < n; ++i) plant_.step(command_);
  return plant_.velocity();
}

ForceLoop::ForceLoop(const ValvePlantParams& plant, const ForceGains& gains, double period)
    : plant_(plant, kPlantDt), controller_(gains), period_(period)
{
  substeps(period);
}

void ForceLoop::reset()
{
  plant_.reset();
  controller_.reset();
  command_ = 0.0;
}

double ForceLoop::step(double reference)
{
  command_ = controller_.update(reference, plant_.force(), period_);
  for (int i = 0, n = substeps(period_); i < n; ++i) plant_.step(command_);
  return plant_.force();
}

FirstOrderLoop::FirstOrderLoop(double cutoffHz, double period)
    : a_(std::exp(-2.0 * M_PI * cutoffHz * period)), period_(period)
{
  if (!(cutoffHz > 0.0) || !(period > 0.0)) throw ConfigError("cutoff", "must be positive");
}

double FirstOrderLoop::step(double reference)
{
  y_ = a_ * y_ + (1.0 - a_) * reference;
  return y_;
}

void ChirpSpec::validate() const
{
  if (!(f0 > 0.0) || !(f1 > f0)) throw ConfigError("chirp.f1", "need 0 < f0 < f1");
  if (!(amplitude > 0.0)) throw ConfigError("chirp.amplitude", "must be positive");
  if (frequencies < 2) throw ConfigError("chirp.frequencies", "need at least 2");
  if (segments < 1) throw ConfigError("chirp.segments", "need at least 1");
}

double chirpValue(const ChirpSpec& c, double t)
{
  const double k = std::log(c.f1 / c.f0);
  const double phase = 2.0 * M_PI * c.f0 * c.duration / k * (std::exp(k * t / c.duration) - 1.0);
  return c.offset + c.amplitude * std::sin(phase);
}

std::optional<double> cutoffFrequency(const std::vector<BodePoint>& points)
{
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].gainDb >= -3.0) continue;
    if (i == 0) return points[0].frequency;
    const BodePoint& a = points[i - 1];
    const BodePoint& b = points[i];
    const double s = (-3.0 - a.gainDb) / (b.gainDb - a.gainDb);
    return std::exp(std::log(a.frequency) + s * (std::log(b.frequency) - std::log(a.frequency)));
  }
  return std::nullopt;
}

BodeData systemIdentify(LoopUnderTest& loop, const ChirpSpec& chirp)
{
  chirp.validate();
  const double T = loop.period();
  if (chirp.duration < 3.0 / chirp.f0) {
    throw InsufficientExcitation("chirp shorter than three periods of its lowest frequency");
  }
  if (chirp.f1 >= 0.5 / T) throw ConfigError("chirp.f1", "must stay below the Nyquist frequency");

  const auto n = static_cast<std::size_t>(std::floor(chirp.duration / T));
  std::vector<double> r(n), y(n);
  loop.reset();
  for (std::size_t k = 0; k < n; ++k) {
    r[k] = chirpValue(chirp, k * T);
    y[k] = loop.step(r[k]);
  }

  // 50% overlapping Hann segments
  const std::size_t len = 2 * n / (chirp.segments + 1);
  const std::size_t hop = len / 2;
  if (len * T < 1.0 / chirp.f0) throw InsufficientExcitation("Welch segments shorter than one period of f0");
  std::vector<double> window(len);
  for (std::size_t i = 0; i < len; ++i) window[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / (len - 1));

  BodeData out;
  const double ratio = std::pow(chirp.f1 / chirp.f0, 1.0 / (chirp.frequencies - 1));
  double prevPhase = 0.0;
  double coherenceSum = 0.0;
  for (int fi = 0; fi < chirp.frequencies; ++fi) {
    const double f = chirp.f0 * std::pow(ratio, fi);
    const std::complex<double> rot = std::polar(1.0, -2.0 * M_PI * f * T);
    double srr = 0.0, syy = 0.0;
    std::complex<double> sry = 0.0;
    for (std::size_t start = 0; start + len <= n; start += hop) {
      double rm = 0.0, ym = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        rm += r[start + i];
        ym += y[start + i];
      }
      rm /= len;
      ym /= len;
      std::complex<double> e = 1.0, R = 0.0, Y = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        R += window[i] * (r[start + i] - rm) * e;
        Y += window[i] * (y[start + i] - ym) * e;
        e *= rot;
      }
      srr += std::norm(R);
      syy += std::norm(Y);
      sry += std::conj(R) * Y;
    }
    const std::complex<double> h = sry / srr;
    BodePoint p;
    p.frequency = f;
    p.gainDb = 20.0 * std::log10(std::abs(h));
    double phase = std::arg(h) * 180.0 / M_PI;
    if (fi > 0) phase -= 360.0 * std::round((phase - prevPhase) / 360.0);
    prevPhase = phase;
    p.phaseDeg = phase;
    p.coherence = std::norm(sry) / (srr * syy);
    coherenceSum += p.coherence;
    out.points.push_back(p);
  }
  out.meanCoherence = coherenceSum / chirp.frequencies;
  if (out.meanCoherence < 0.8) {
    throw InsufficientExcitation("mean coherence " + formatDouble(out.meanCoherence) + " below 0.8 over the band");
  }
  out.cutoffHz = cutoffFrequency(out.points);
  return out;
}

StepResponse stepResponse(LoopUnderTest& loop, double amplitude, double duration, double offset)
{
  StepResponse s;
  loop.reset();
  const double T = loop.period();
  double y0 = 0.0;
  if (offset != 0.0) {
    for (double t = 0.0; t < 5.0; t += T) y0 = loop.step(offset);
  }
  const auto n = static_cast<std::size_t>(std::lround(duration / T));
  for (std::size_t k = 0; k < n; ++k) {
    const double y = loop.step(offset + amplitude);
    const double t = (k + 1) * T;
    s.time.push_back(t);
    s.output.push_back(y);
    if (!s.t90 && (y - y0) / amplitude >= 0.9) s.t90 = t;
  }
  s.finalValue = s.output.empty() ? y0 : s.output.back();
  return s;
}

double signChangesPerSecond(const std::vector<double>& values, double period, double window)
{
  const auto count = static_cast<std::size_t>(std::lround(window / period));
  const std::size_t start = values.size() > count ? values.size() - count : 0;
  int changes = 0;
  double last = 0.0;
  for (std::size_t i = start; i < values.size(); ++i) {
    const double s = sign(values[i]);
    if (s == 0.0) continue;
    if (last != 0.0 && s != last) ++changes;
    last = s;
  }
  return changes / window;
}

// ---- configuration ----

namespace {

ValvePlantParams readPlant(const KeyValueDoc& doc, const std::string& p)
{
  const ValveKind kind = [&] {
    try {
      return parseValveKind(doc.getString(p + ".kind"));
    } catch (const ConfigError& e) {
      if (!e.keyPath().empty()) throw;
      throw ConfigError(p + ".kind", e.what());
    }
  }();
  ValvePlantParams v = ValvePlantParams::defaults(kind);
  v.deadZone = doc.getDouble(p + ".dead_zone", v.deadZone);
  v.lag = doc.getDouble(p + ".lag", v.lag);
  v.delay = doc.getDouble(p + ".delay", v.delay);
  v.flowGain = doc.getDouble(p + ".flow_gain", v.flowGain);
  v.gravityAsymmetry = doc.getDouble(p + ".gravity_asymmetry", v.gravityAsymmetry);
  v.gravitySign = doc.getInt(p + ".gravity_sign", v.gravitySign);
  v.loadStiffness = doc.getDouble(p + ".load_stiffness", v.loadStiffness);
  v.commandLimit = doc.getDouble(p + ".command_limit", v.commandLimit);
  try {
    v.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(p + "." + e.keyPath(), e.what());
  }
  return v;
}

}  // namespace

std::vector<LoopConfig> parsePlantConfig(const KeyValueDoc& doc)
{
  if (doc.getString("kind", "plants") != "plants") throw ConfigError("kind", "expected a plants file");
  if (doc.getInt("schema_version") != 1) throw ConfigError("schema_version", "unsupported schema version");
  std::vector<LoopConfig> loops;
  for (const std::string& name : doc.children("loop")) {
    const std::string p = "loop." + name;
    LoopConfig c;
    c.name = name;
    c.mode = doc.getString(p + ".mode");
    if (c.mode != "velocity" && c.mode != "force" && c.mode != "first_order") {
      throw ConfigError(p + ".mode", "expected velocity, force or first_order");
    }
    if (c.mode == "first_order") {
      c.cutoffHz = doc.getDouble(p + ".cutoff_hz");
    } else {
      c.plant = readPlant(doc, p + ".plant");
    }
    if (c.mode == "velocity") {
      c.velocityGains.kp = doc.getDouble(p + ".gains.kp");
      c.velocityGains.ki = doc.getDouble(p + ".gains.ki");
      c.velocityGains.outputLimit = doc.getDouble(p + ".gains.output_limit", 1.0);
    } else if (c.mode == "force") {
      c.forceGains.kp = doc.getDouble(p + ".gains.kp");
      c.forceGains.ki = doc.getDouble(p + ".gains.ki");
      c.forceGains.outputLimit = doc.getDouble(p + ".gains.output_limit", 1.0);
      c.forceGains.deadZoneCompensation = doc.getDouble(p + ".gains.dead_zone_compensation", c.plant.deadZone);
      c.forceGains.threshold = doc.getDouble(p + ".gains.threshold", c.forceGains.threshold);
    }
    c.chirp.f0 = doc.getDouble(p + ".chirp.f0", c.chirp.f0);
    c.chirp.f1 = doc.getDouble(p + ".chirp.f1", c.chirp.f1);
    c.chirp.amplitude = doc.getDouble(p + ".chirp.amplitude", c.chirp.amplitude);
    c.chirp.offset = doc.getDouble(p + ".chirp.offset", c.chirp.offset);
    c.chirp.duration = doc.getDouble(p + ".chirp.duration", c.chirp.duration);
    c.chirp.frequencies = doc.getInt(p + ".chirp.frequencies", c.chirp.frequencies);
    c.chirp.segments = doc.getInt(p + ".chirp.segments", c.chirp.segments);
    try {
      c.chirp.validate();
    } catch (const ConfigError& e) {
      throw ConfigError(p + "." + e.keyPath(), e.what());
    }
    c.stepAmplitude = doc.getDouble(p + ".step.amplitude", c.stepAmplitude);
    c.stepOffset = doc.getDouble(p + ".step.offset", c.stepOffset);
    c.stepDuration = doc.getDouble(p + ".step.duration", c.stepDuration);
    loops.push_back(c);
  }
  if (loops.empty()) throw ConfigError("loop", "no loops configured");
  doc.checkAllConsumed();
  return loops;
}

std::unique_ptr<LoopUnderTest> makeLoop(const LoopConfig& c)
{
  if (c.mode == "first_order") return std::make_unique<FirstOrderLoop>(c.cutoffHz);
  if (c.mode == "force") return std::make_unique<ForceLoop>(c.plant, c.forceGains);
  return std::make_unique<VelocityLoop>(c.plant, LutPI(LookupTable::fromPlant(c.plant), c.velocityGains));
}

}  // namespace walkex
