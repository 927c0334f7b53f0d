#include "cli.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "walkex/actuation.hpp"
#include "walkex/arm_control.hpp"
#include "walkex/errors.hpp"
#include "walkex/sim.hpp"

namespace walkex::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

std::string sha256File(const std::string& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("", "cannot open '" + path + "'");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int size = 0;
  EVP_DigestFinal_ex(ctx, digest, &size);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < size; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

namespace {

std::string num(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

struct Common
{
  std::string input;
  std::string outDir;
  std::string modelPath;
};

RobotModel loadModel(const std::string& path)
{
  return path.empty() ? RobotModel::defaultModel() : RobotModel::load(path);
}

fs::path outputDir(const std::string& flag)
{
  std::string dir = flag;
  if (dir.empty()) {
    const char* env = std::getenv(kOutDirEnv);
    if (env) dir = env;
  }
  if (dir.empty()) throw ConfigError("--out", std::string("no output directory; pass --out or set ") + kOutDirEnv);
  fs::create_directories(dir);
  return dir;
}

/// Collects the files of one invocation and writes the manifest last.
class Outputs
{
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) {}

  template <class F>
  void write(const std::string& name, F&& body)
  {
    const fs::path p = dir_ / name;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
    body(out);
    out.close();
    if (!out) throw std::runtime_error("failed writing '" + p.string() + "'");
    names_.push_back(name);
  }

  void manifest(const std::string& command, const Common& c, const std::vector<std::uint64_t>& seeds,
                std::chrono::steady_clock::time_point start, const Json& overrides = Json::object())
  {
    Json j;
    j["tool"] = "walkex";
    j["version"] = WALKEX_VERSION;
    j["schema_version"] = kScenarioSchemaVersion;
    j["command"] = command;
    j["input"] = {{"path", c.input}, {"sha256", sha256File(c.input)}};
    if (c.modelPath.empty()) j["model"] = {{"path", "builtin"}};
    else j["model"] = {{"path", c.modelPath}, {"sha256", sha256File(c.modelPath)}};
    j["overrides"] = overrides;
    j["seeds"] = seeds;
    Json files = Json::array();
    for (const std::string& n : names_) files.push_back({{"path", n}, {"sha256", sha256File((dir_ / n).string())}});
    j["outputs"] = files;
    j["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::ofstream out(dir_ / "manifest.json", std::ios::binary);
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("failed writing manifest");
  }

 private:
  fs::path dir_;
  std::vector<std::string> names_;
};

unsigned defaultWorkers() { return std::max(1u, std::thread::hardware_concurrency()); }

int cmdRun(const Common& c, std::optional<std::uint64_t> seedFlag, const std::string& setupFlag, std::ostream& out)
{
  const auto start = std::chrono::steady_clock::now();
  KeyValueDoc doc = KeyValueDoc::load(c.input);
  if (!setupFlag.empty()) doc.set("estimator.setup", setupFlag);
  const Scenario s = parseScenario(doc);
  const RobotModel model = loadModel(c.modelPath);
  const std::uint64_t seed = seedFlag.value_or(s.seed);
  Outputs files(outputDir(c.outDir));
  const RunReport r = run(s, model, seed);
  files.write("report.csv", [&](std::ostream& o) { r.writeCsv(o); });
  files.write("summary.txt", [&](std::ostream& o) { r.writeSummary(o); });
  Json overrides = Json::object();
  if (!setupFlag.empty()) overrides["estimator.setup"] = setupFlag;
  files.manifest("run", c, {seed}, start, overrides);
  out << s.name << " seed " << seed << " " << setupName(s.estimator.setup) << ": position rmse "
      << num(r.position.rmse) << " m, orientation rmse " << num(r.orientation.rmse) << " rad\n";
  return kOk;
}

int cmdCompare(const Common& c, int seeds, std::optional<std::uint64_t> first, unsigned workers, std::ostream& out)
{
  const auto start = std::chrono::steady_clock::now();
  if (seeds < 1) throw ConfigError("--seeds", "must be >= 1");
  const Scenario s = loadScenario(c.input);
  const RobotModel model = loadModel(c.modelPath);
  const std::vector<std::uint64_t> list = seedRange(first.value_or(s.seed), seeds);
  Outputs files(outputDir(c.outDir));
  const SetupComparison cmp = compareSetups(s, model, list, workers);
  files.write("curves.csv", [&](std::ostream& o) { cmp.writeCurves(o); });
  files.write("comparison.txt", [&](std::ostream& o) { cmp.writeSummary(o); });
  files.manifest("compare-setups", c, list, start);
  out << "verdict: " << cmp.verdict() << "\n";
  out << "protocol holds on " << cmp.countProtocolHolds(0.1) << "/" << list.size() << " seeds\n";
  return kOk;
}

int cmdSweep(const Common& c, int seeds, std::optional<std::uint64_t> first, unsigned workers, std::ostream& out)
{
  const auto start = std::chrono::steady_clock::now();
  if (seeds < 1) throw ConfigError("--seeds", "must be >= 1");
  const Scenario s = loadScenario(c.input);
  const RobotModel model = loadModel(c.modelPath);
  const std::vector<std::uint64_t> list = seedRange(first.value_or(s.seed), seeds);
  Outputs files(outputDir(c.outDir));
  std::vector<RunReport> reports(list.size());
  parallelFor(list.size(), workers, [&](std::size_t i) {
    reports[i] = run(s, model, list[i]);
    reports[i].rows.clear();  // only the summaries are kept
  });
  files.write("sweep.csv", [&](std::ostream& o) {
    o << "seed,position_sse,position_rmse,orientation_rmse,velocity_rmse,acc_bias_rmse,gyro_bias_rmse\n";
    for (const RunReport& r : reports) {
      o << r.seed << ',' << num(r.position.sse) << ',' << num(r.position.rmse) << ',' << num(r.orientation.rmse) << ','
        << num(r.velocity.rmse) << ',' << num(r.accBias.rmse) << ',' << num(r.gyroBias.rmse) << '\n';
    }
  });
  files.manifest("sweep", c, list, start);
  double worst = 0.0;
  for (const RunReport& r : reports) worst = std::max(worst, r.position.rmse);
  out << list.size() << " runs, worst position rmse " << num(worst) << " m\n";
  return kOk;
}

int cmdSysid(const Common& c, unsigned workers, std::ostream& out)
{
  const auto start = std::chrono::steady_clock::now();
  const std::vector<LoopConfig> loops = parsePlantConfig(KeyValueDoc::load(c.input));
  Outputs files(outputDir(c.outDir));
  struct Result
  {
    BodeData bode;
    std::string failure;
    StepResponse step;
  };
  std::vector<Result> results(loops.size());
  parallelFor(loops.size(), workers, [&](std::size_t i) {
    try {
      auto loop = makeLoop(loops[i]);
      results[i].bode = systemIdentify(*loop, loops[i].chirp);
    } catch (const InsufficientExcitation& e) {
      results[i].failure = e.what();
    }
    auto loop = makeLoop(loops[i]);
    results[i].step = stepResponse(*loop, loops[i].stepAmplitude, loops[i].stepDuration, loops[i].stepOffset);
  });

  auto plantName = [](const LoopConfig& l) { return l.mode == "first_order" ? "analytic" : valveKindName(l.plant.kind); };
  for (std::size_t i = 0; i < loops.size(); ++i) {
    const Result& r = results[i];
    if (r.failure.empty()) {
      files.write("bode_" + loops[i].name + ".csv", [&](std::ostream& o) {
        o << "frequency_hz,gain_db,phase_deg,coherence\n";
        for (const BodePoint& p : r.bode.points) {
          o << num(p.frequency) << ',' << num(p.gainDb) << ',' << num(p.phaseDeg) << ',' << num(p.coherence) << '\n';
        }
      });
    }
    files.write("step_" + loops[i].name + ".csv", [&](std::ostream& o) {
      o << "time,output,reference\n";
      for (std::size_t k = 0; k < r.step.time.size(); ++k) {
        o << num(r.step.time[k]) << ',' << num(r.step.output[k]) << ',' << num(loops[i].stepAmplitude) << '\n';
      }
    });
  }
  // same columns as the hardware tables: t90 and cut-off per loop
  files.write("sysid.csv", [&](std::ostream& o) {
    o << "loop,mode,plant,t90_ms,cutoff_hz,mean_coherence,note\n";
    for (std::size_t i = 0; i < loops.size(); ++i) {
      const Result& r = results[i];
      o << loops[i].name << ',' << loops[i].mode << ',' << plantName(loops[i]) << ','
        << (r.step.t90 ? num(*r.step.t90 * 1e3) : "") << ',';
      if (r.failure.empty()) {
        o << (r.bode.cutoffHz ? num(*r.bode.cutoffHz) : "") << ',' << num(r.bode.meanCoherence) << ','
          << (r.bode.cutoffHz ? "" : "cutoff above f1=" + num(loops[i].chirp.f1) + " Hz");
      } else {
        o << ",,insufficient excitation";
      }
      o << '\n';
    }
  });
  files.manifest("sysid", c, {}, start);
  for (std::size_t i = 0; i < loops.size(); ++i) {
    const Result& r = results[i];
    out << loops[i].name << ": t90 " << (r.step.t90 ? num(*r.step.t90 * 1e3) + " ms" : "not reached") << ", cut-off ";
    if (!r.failure.empty()) out << "n/a (insufficient excitation)";
    else if (r.bode.cutoffHz) out << num(*r.bode.cutoffHz) << " Hz";
    else out << "> " << num(loops[i].chirp.f1) << " Hz";
    out << "\n";
  }
  return kOk;
}

int cmdValidate(const std::string& path, std::ostream& out)
{
  const KeyValueDoc doc = KeyValueDoc::load(path);
  const std::string kind = doc.getString("kind");
  if (kind == "scenario") {
    const Scenario s = parseScenario(doc);
    try {
      TruthIntegrator check(RobotModel::defaultModel(), s);
    } catch (const OutOfRange& e) {
      throw ConfigError("start", std::string("start stance is not reachable: ") + e.what());
    }
  } else if (kind == "plants") {
    parsePlantConfig(doc);
  } else if (kind == "arm") {
    parseArmConfig(doc);
  } else if (kind == "model") {
    RobotModel::fromDoc(doc);
  } else {
    throw ConfigError("kind", "unknown kind '" + kind + "' (expected scenario, plants, arm or model)");
  }
  out << path << ": ok (" << kind << ")\n";
  return kOk;
}

}  // namespace

int main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
  CLI::App app{"Wheeled-legged excavator estimation and control toolkit", "walkex"};
  app.set_version_flag("--version", std::string("walkex ") + WALKEX_VERSION);
  app.require_subcommand(1);
  app.footer(std::string("Exit codes: 0 ok, 2 configuration error, 3 runtime error.\nDefault output directory: $") +
             kOutDirEnv);

  Common common;
  std::optional<std::uint64_t> seed, firstSeed;
  std::string setup;
  int seeds = 10;
  unsigned workers = defaultWorkers();

  auto addCommon = [&](CLI::App* sub, const char* what) {
    sub->add_option("input", common.input, what)->required();
    sub->add_option("--out", common.outDir, "output directory");
    sub->add_option("--model", common.modelPath, "robot model file (default: built-in)");
  };
  CLI::App* runCmd = app.add_subcommand("run", "simulate a scenario and write its report");
  addCommon(runCmd, "scenario file");
  runCmd->add_option("--seed", seed, "override the scenario seed");
  runCmd->add_option("--setup", setup, "override the residual setup (imu_gnss, full)");

  CLI::App* compareCmd = app.add_subcommand("compare-setups", "both residual setups on identical sensor streams");
  addCommon(compareCmd, "scenario file");
  compareCmd->add_option("--seeds", seeds, "number of seeds")->capture_default_str();
  compareCmd->add_option("--first-seed", firstSeed, "first seed (default: the scenario seed)");
  compareCmd->add_option("--workers", workers, "parallel runs")->capture_default_str();

  CLI::App* sweepCmd = app.add_subcommand("sweep", "one scenario over many seeds");
  addCommon(sweepCmd, "scenario file");
  sweepCmd->add_option("--seeds", seeds, "number of seeds")->capture_default_str();
  sweepCmd->add_option("--first-seed", firstSeed, "first seed (default: the scenario seed)");
  sweepCmd->add_option("--workers", workers, "parallel runs")->capture_default_str();

  CLI::App* sysidCmd = app.add_subcommand("sysid", "chirp identification and step responses of actuator loops");
  addCommon(sysidCmd, "plant configuration file");
  sysidCmd->add_option("--workers", workers, "parallel loops")->capture_default_str();

  std::string validatePath;
  CLI::App* validateCmd = app.add_subcommand("validate", "check a scenario, plants, arm or model file");
  validateCmd->add_option("file", validatePath, "file to check")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    if (!reversed.empty()) reversed.pop_back();
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*runCmd) return cmdRun(common, seed, setup, out);
    if (*compareCmd) return cmdCompare(common, seeds, firstSeed, workers, out);
    if (*sweepCmd) return cmdSweep(common, seeds, firstSeed, workers, out);
    if (*sysidCmd) return cmdSysid(common, workers, out);
    if (*validateCmd) return cmdValidate(validatePath, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kConfigError;
}

}  // namespace walkex::cli
