#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "walkex/actuation.hpp"
#include "walkex/errors.hpp"

using namespace walkex;

namespace {

std::string plantsPath() { return std::string(WALKEX_SOURCE_DIR) + "/config/plants.conf"; }

const LoopConfig& loopConfig(const std::string& name)
{
  static const std::vector<LoopConfig> loops = parsePlantConfig(KeyValueDoc::load(plantsPath()));
  for (const LoopConfig& c : loops) {
    if (c.name == name) return c;
  }
  throw std::runtime_error("no loop " + name);
}

class NoiseLoop : public LoopUnderTest
{
 public:
  void reset() override { rng_.seed(1); }
  double step(double) override { return std::normal_distribution<double>(0.0, 1.0)(rng_); }
  double period() const override { return 0.01; }

 private:
  std::mt19937 rng_;
};

}  // namespace

TEST(LookupTable, ThirteenKnotsExactAndMonotone)
{
  const LookupTable t = LookupTable::fromPlant(ValvePlantParams::defaults(ValveKind::PilotMain));
  ASSERT_EQ(t.velocities().size(), 13u);
  for (std::size_t i = 0; i < 13; ++i) EXPECT_EQ(t(t.velocities()[i]), t.commands()[i]);
  std::mt19937 rng(2);
  std::uniform_real_distribution<double> u(-0.35, 0.35);
  for (int k = 0; k < 1000; ++k) {
    const double a = u(rng), b = u(rng);
    if (a < b) EXPECT_LE(t(a), t(b));
  }
  EXPECT_EQ(t(1.0), t.commands().back());  // clamped
}

TEST(LookupTable, RejectsNonMonotoneTable)
{
  EXPECT_THROW(LookupTable({0.0, 0.1, 0.1}, {0.0, 0.2, 0.3}), ConfigError);
}

TEST(VelocityLoop, KnotReferenceWithoutErrorGivesTableValue)
{
  const LookupTable t = LookupTable::fromPlant(ValvePlantParams::defaults(ValveKind::PilotMain));
  LutPI c(t, {0.3, 2.0, 1.0});
  EXPECT_EQ(c.update(0.05, 0.05, 0.01), t(0.05));
  LutPI z(t, {0.3, 2.0, 1.0});
  EXPECT_EQ(z.update(0.0, 0.0, 0.01), 0.0);
}

TEST(VelocityLoop, PilotStepBracketsHardwareRiseTimes)
{
  for (const char* name : {"pilot_velocity", "pilot_velocity_against"}) {
    const LoopConfig& c = loopConfig(name);
    auto loop = makeLoop(c);
    const StepResponse s = stepResponse(*loop, c.stepAmplitude, 10.0);
    ASSERT_TRUE(s.t90.has_value()) << name;
    EXPECT_GE(*s.t90, 0.4) << name;
    EXPECT_LE(*s.t90, 1.2) << name;
  }
  // against gravity is slower
  auto with = makeLoop(loopConfig("pilot_velocity"));
  auto against = makeLoop(loopConfig("pilot_velocity_against"));
  EXPECT_LT(*stepResponse(*with, 0.03, 5.0).t90, *stepResponse(*against, 0.03, 5.0).t90);
}

TEST(VelocityLoop, ZeroSteadyStateErrorOnConstantReferences)
{
  const LoopConfig& c = loopConfig("pilot_velocity");
  for (double r : {0.005, 0.03, -0.03, 0.15, -0.25}) {
    auto loop = makeLoop(c);
    // 20 s covers well over 20 lag time constants of the slowest direction
    const StepResponse s = stepResponse(*loop, r, 20.0);
    EXPECT_NEAR(s.finalValue, r, 1e-6 * std::abs(r)) << r;
  }
}

TEST(VelocityLoop, NoLimitCyclingAtSteadyState)
{
  const LoopConfig& c = loopConfig("pilot_velocity");
  VelocityLoop loop(c.plant, LutPI(LookupTable::fromPlant(c.plant), c.velocityGains));
  std::vector<double> commands;
  for (int k = 0; k < 2000; ++k) {
    loop.step(0.01);
    commands.push_back(loop.lastCommand());
  }
  EXPECT_LT(signChangesPerSecond(commands, 0.01, 10.0), 5.0);
}

TEST(VelocityLoop, ServoCutoffAboveTwoHertz)
{
  const LoopConfig& c = loopConfig("servo_velocity");
  auto loop = makeLoop(c);
  const BodeData b = systemIdentify(*loop, c.chirp);
  // no -3 dB crossing inside the band means the cut-off lies above f1
  const double cutoff = b.cutoffHz.value_or(c.chirp.f1);
  EXPECT_GT(cutoff, 2.0);
}

TEST(VelocityLoop, PilotCutoffBracketsHardware)
{
  const LoopConfig& c = loopConfig("pilot_velocity");
  auto loop = makeLoop(c);
  const BodeData b = systemIdentify(*loop, c.chirp);
  ASSERT_TRUE(b.cutoffHz.has_value());
  EXPECT_GE(*b.cutoffHz, 0.3);
  EXPECT_LE(*b.cutoffHz, 0.8);
  EXPECT_GE(b.meanCoherence, 0.8);
}

TEST(ForceLoop, ZeroErrorGivesZeroCommand)
{
  ForceController c({1e-7, 1e-8, 1.0, 0.2, 500.0});
  EXPECT_EQ(c.update(3e4, 3e4, 0.01), 0.0);
  ForceController d({0.0, 0.0, 1.0, 0.2, 500.0});
  EXPECT_EQ(d.update(3e4, 3e4 - 400.0, 0.01), 0.0);  // below the gate
  EXPECT_EQ(d.update(3e4, 3e4 - 600.0, 0.01), 0.2);
  EXPECT_EQ(d.update(3e4, 3e4 + 600.0, 0.01), -0.2);
}

TEST(ForceLoop, ServoRiseTime)
{
  const LoopConfig& c = loopConfig("servo_force");
  auto loop = makeLoop(c);
  const StepResponse s = stepResponse(*loop, c.stepAmplitude, 2.0, c.stepOffset);
  ASSERT_TRUE(s.t90.has_value());
  EXPECT_LT(*s.t90, 0.1);
}

TEST(ForceLoop, PilotRiseTimeBracketsHardware)
{
  const LoopConfig& c = loopConfig("pilot_force");
  auto loop = makeLoop(c);
  const StepResponse s = stepResponse(*loop, c.stepAmplitude, 10.0, c.stepOffset);
  ASSERT_TRUE(s.t90.has_value());
  EXPECT_GE(*s.t90, 0.4);
  EXPECT_LE(*s.t90, 1.2);
}

TEST(ForceLoop, DeadZoneCompensationDoesNotHunt)
{
  const LoopConfig& c = loopConfig("pilot_force");
  ForceLoop loop(c.plant, c.forceGains);
  std::vector<double> commands;
  for (int k = 0; k < 3000; ++k) {
    loop.step(k < 500 ? 3e4 : 5e4);
    commands.push_back(loop.lastCommand());
  }
  EXPECT_LT(signChangesPerSecond(commands, 0.01, 10.0), 5.0);
}

TEST(SystemIdentify, FirstOrderCutoffWithinTenPercent)
{
  for (double fc : {0.3, 1.0, 3.0}) {
    FirstOrderLoop loop(fc);
    ChirpSpec chirp;
    chirp.amplitude = 1.0;
    const BodeData b = systemIdentify(loop, chirp);
    ASSERT_TRUE(b.cutoffHz.has_value());
    EXPECT_NEAR(*b.cutoffHz, fc, 0.1 * fc);
    // analytic gain away from the sweep edges, where few segments carry energy
    for (const BodePoint& p : b.points) {
      if (p.frequency < 2.0 * chirp.f0 || p.frequency > 0.5 * chirp.f1) continue;
      EXPECT_NEAR(p.gainDb, -10.0 * std::log10(1.0 + std::pow(p.frequency / fc, 2)), 0.5) << p.frequency;
    }
    EXPECT_LT(b.points.back().phaseDeg, -45.0);
  }
}

TEST(SystemIdentify, ShortSweepIsRejected)
{
  FirstOrderLoop loop(1.0);
  ChirpSpec chirp;
  chirp.duration = 30.0;  // fewer than three periods of 0.05 Hz
  EXPECT_THROW(systemIdentify(loop, chirp), InsufficientExcitation);
}

TEST(SystemIdentify, UncorrelatedOutputIsRejected)
{
  NoiseLoop loop;
  EXPECT_THROW(systemIdentify(loop, ChirpSpec{}), InsufficientExcitation);
}

TEST(PlantConfig, UnknownKeyNamed)
{
  const KeyValueDoc doc = KeyValueDoc::parse(
      "kind = plants\nschema_version = 1\nloop.a.mode = first_order\nloop.a.cutoff_hz = 1\nloop.a.cutof = 2\n");
  try {
    parsePlantConfig(doc);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.keyPath(), "loop.a.cutof");
  }
}

TEST(PlantConfig, EmptyListRejected)
{
  EXPECT_THROW(parsePlantConfig(KeyValueDoc::parse("kind = plants\nschema_version = 1\n")), ConfigError);
}

TEST(PlantConfig, ServoWithDeadZoneRejected)
{
  const KeyValueDoc doc = KeyValueDoc::parse(
      "kind = plants\nschema_version = 1\nloop.a.mode = velocity\nloop.a.plant.kind = servo\n"
      "loop.a.plant.dead_zone = 0.1\nloop.a.gains.kp = 1\nloop.a.gains.ki = 1\n");
  try {
    parsePlantConfig(doc);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.keyPath(), "loop.a.plant.dead_zone");
  }
}
