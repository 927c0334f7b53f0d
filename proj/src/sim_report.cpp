#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <ostream>
#include <thread>

#include "walkex/errors.hpp"
#include "walkex/sim.hpp"

namespace walkex {

namespace {

std::string num(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

void put(std::ostream& out, const Vec3& v)
{
  out << ',' << num(v.x()) << ',' << num(v.y()) << ',' << num(v.z());
}

void header3(std::ostream& out, const std::string& prefix)
{
  out << ',' << prefix << "_x," << prefix << "_y," << prefix << "_z";
}

double relativeError(double errorSum, double normSum)
{
  return normSum > 0.0 ? errorSum / normSum : errorSum;
}

}  // namespace

// ---- report ----

void RunReport::summarize()
{
  position = orientation = velocity = accBias = gyroBias = {};
  innovations = {};
  const double n = std::max<std::size_t>(rows.size(), 1);
  for (const ReportRow& r : rows) {
    position.sse += r.positionSq;
    orientation.sse += r.orientationSq;
    velocity.sse += r.velocitySq;
    accBias.sse += (r.estimate.accBias - r.truth.accBias).squaredNorm();
    gyroBias.sse += (r.estimate.gyroBias - r.truth.gyroBias).squaredNorm();
    const double v[4] = {r.innovations.imu, r.innovations.gnss, r.innovations.rolling, r.innovations.legs};
    for (int c = 0; c < 4; ++c) {
      innovations[c].mean += v[c] / n;
      innovations[c].rms += v[c] * v[c] / n;
      innovations[c].max = std::max(innovations[c].max, v[c]);
    }
  }
  for (ChannelStats* c : {&position, &orientation, &velocity, &accBias, &gyroBias}) c->rmse = std::sqrt(c->sse / n);
  for (InnovationStats& s : innovations) s.rms = std::sqrt(s.rms);
}

void RunReport::writeCsv(std::ostream& out) const
{
  out << "time";
  for (const char* p : {"true_p", "est_p", "true_rot", "est_rot", "true_v", "est_v", "true_bf", "est_bf", "true_bw",
                        "est_bw"}) {
    header3(out, p);
  }
  out << ",sq_position,sq_orientation,sq_velocity,innov_imu,innov_gnss,innov_rolling,innov_legs\n";
  for (const ReportRow& r : rows) {
    out << num(r.time);
    put(out, r.truth.position);
    put(out, r.estimate.position);
    put(out, r.truth.orientation.log());
    put(out, r.estimate.orientation.log());
    put(out, r.truth.velocity);
    put(out, r.estimate.velocity);
    put(out, r.truth.accBias);
    put(out, r.estimate.accBias);
    put(out, r.truth.gyroBias);
    put(out, r.estimate.gyroBias);
    out << ',' << num(r.positionSq) << ',' << num(r.orientationSq) << ',' << num(r.velocitySq) << ','
        << num(r.innovations.imu) << ',' << num(r.innovations.gnss) << ',' << num(r.innovations.rolling) << ','
        << num(r.innovations.legs) << '\n';
  }
}

void RunReport::writeSummary(std::ostream& out) const
{
  out << "kind = run_report\n";
  out << "schema_version = " << kScenarioSchemaVersion << "\n";
  out << "scenario = " << scenario << "\n";
  out << "setup = " << setupName(setup) << "\n";
  out << "seed = " << seed << "\n";
  out << "dt = " << num(dt) << "\n";
  out << "rows = " << rows.size() << "\n";
  const std::pair<const char*, const ChannelStats*> channels[] = {{"position", &position},
                                                                   {"orientation", &orientation},
                                                                   {"velocity", &velocity},
                                                                   {"acc_bias", &accBias},
                                                                   {"gyro_bias", &gyroBias}};
  for (const auto& [name, c] : channels) {
    out << name << ".sse = " << num(c->sse) << "\n";
    out << name << ".rmse = " << num(c->rmse) << "\n";
  }
  const char* names[4] = {"imu", "gnss", "rolling", "legs"};
  for (int c = 0; c < 4; ++c) {
    out << "innovation." << names[c] << ".mean = " << num(innovations[c].mean) << "\n";
    out << "innovation." << names[c] << ".rms = " << num(innovations[c].rms) << "\n";
    out << "innovation." << names[c] << ".max = " << num(innovations[c].max) << "\n";
  }
}

// ---- runs ----

Eigen::VectorXd initialSigma(const Scenario& scenario, ResidualSetup setup)
{
  const EstimatorSetupConfig& e = scenario.estimator;
  Eigen::VectorXd s(stateDimension(setup));
  s.segment<3>(state_index::kPosition).setConstant(e.sigmaPosition);
  s.segment<3>(state_index::kOrientation).setConstant(e.sigmaOrientation);
  s.segment<3>(state_index::kVelocity).setConstant(e.sigmaVelocity);
  s.segment<3>(state_index::kAccBias).setConstant(e.sigmaAccBias);
  s.segment<3>(state_index::kGyroBias).setConstant(e.sigmaGyroBias);
  if (setup == ResidualSetup::Full) s.tail(12).setConstant(std::sqrt(e.noise.landmarkInitialVariance));
  return s;
}

EstimatorState initialEstimate(const Scenario& scenario, const EstimatorState& truth, std::uint64_t seed)
{
  EstimatorState x = truth;
  switch (scenario.estimator.initial) {
    case InitialEstimate::Truth: break;
    case InitialEstimate::ZeroBias:
      x.accBias.setZero();
      x.gyroBias.setZero();
      break;
    case InitialEstimate::Sampled: {
      std::seed_seq seq{seed, std::uint64_t{3}};
      std::mt19937_64 rng(seq);
      std::normal_distribution<double> normal;
      const Eigen::VectorXd sigma = initialSigma(scenario, ResidualSetup::ImuGnss);
      Eigen::VectorXd d(15);
      for (int k = 0; k < 15; ++k) d(k) = sigma(k) * normal(rng);
      x = truth.boxplus(d);
      break;
    }
  }
  return x;
}

RunReport evaluate(const Scenario& scenario, const RobotModel& model, const SimulatedStream& stream,
                   ResidualSetup setup, std::uint64_t seed)
{
  RunReport report;
  report.scenario = scenario.name;
  report.setup = setup;
  report.seed = seed;
  report.dt = scenario.dt;
  Estimator est(model, scenario.estimator.noise, setup);
  est.initialize(stream.frames.front(), initialEstimate(scenario, stream.truth.front().state, seed),
                 initialSigma(scenario, setup));
  report.rows.reserve(stream.frames.size());
  for (std::size_t k = 1; k < stream.frames.size(); ++k) {
    const EstimatorState& x = est.step(stream.frames[k]);
    const EstimatorState& t = stream.truth[k].state;
    ReportRow r;
    r.time = stream.truth[k].time;
    r.truth = t;
    r.estimate = x;
    r.positionSq = (x.position - t.position).squaredNorm();
    r.orientationSq = boxminus(x.orientation, t.orientation).squaredNorm();
    r.velocitySq = (x.velocity - t.velocity).squaredNorm();
    r.innovations = est.innovations();
    if (!x.allFinite()) throw SingularInformation("estimate diverged at t = " + formatDouble(r.time));
    report.rows.push_back(r);
  }
  report.summarize();
  return report;
}

RunReport run(const Scenario& scenario, const RobotModel& model, std::uint64_t seed)
{
  return evaluate(scenario, model, simulate(scenario, model, seed), scenario.estimator.setup, seed);
}

RunReport run(const Scenario& scenario, const RobotModel& model) { return run(scenario, model, scenario.seed); }

void parallelFor(std::size_t count, unsigned workers, const std::function<void(std::size_t)>& body)
{
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(count)));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mutex);
        if (!failure) failure = std::current_exception();
        next = count;
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
}

std::vector<std::uint64_t> seedRange(std::uint64_t first, int count)
{
  std::vector<std::uint64_t> out;
  for (int i = 0; i < count; ++i) out.push_back(first + static_cast<std::uint64_t>(i));
  return out;
}

// ---- setup comparison ----

namespace {

struct WindowMean
{
  double sum = 0.0;
  int count = 0;
  void add(double v)
  {
    sum += v;
    ++count;
  }
  double value() const { return count ? sum / count : 0.0; }
};

bool inSlip(const Scenario& s, double t)
{
  for (const SlipWindow& w : s.slip) {
    if (w.window.contains(t)) return true;
  }
  return false;
}

std::pair<double, double> biasErrors(const Scenario& s, const RunReport& r)
{
  double accErr = 0.0, accNorm = 0.0, gyroErr = 0.0, gyroNorm = 0.0;
  const double from = s.duration - s.evaluation.biasWindow;
  for (const ReportRow& row : r.rows) {
    if (row.time < from) continue;
    accErr += (row.estimate.accBias - row.truth.accBias).norm();
    accNorm += row.truth.accBias.norm();
    gyroErr += (row.estimate.gyroBias - row.truth.gyroBias).norm();
    gyroNorm += row.truth.gyroBias.norm();
  }
  return {relativeError(accErr, accNorm), relativeError(gyroErr, gyroNorm)};
}

const char* winner(double imuGnss, double full)
{
  if ((imuGnss < 1e-12 && full < 1e-12) || imuGnss == full) return "tie";
  return full < imuGnss ? "full" : "imu_gnss";
}

std::string majority(const std::vector<SeedComparison>& seeds, double SeedComparison::*a, double SeedComparison::*b)
{
  int full = 0, imu = 0;
  for (const SeedComparison& s : seeds) {
    const std::string w = winner(s.*a, s.*b);
    if (w == "full") ++full;
    else if (w == "imu_gnss") ++imu;
  }
  if (full == imu) return "tie";
  return full > imu ? "full" : "imu_gnss";
}

}  // namespace

SetupComparison compareSetups(const Scenario& scenario, const RobotModel& model,
                              const std::vector<std::uint64_t>& seeds, unsigned workers, bool keepReports)
{
  SetupComparison out;
  out.seeds.resize(seeds.size());
  out.imuGnss.resize(seeds.empty() ? 0 : keepReports ? seeds.size() : 1);
  out.full.resize(out.imuGnss.size());
  out.windows = {scenario.evaluation.onset > 0.0, !scenario.slip.empty(),
                 scenario.evaluation.converged < scenario.duration};
  out.afterSignificance = 0.1 * std::sqrt(scenario.sensors.gnssVariance);
  parallelFor(seeds.size(), workers, [&](std::size_t i) {
    const SimulatedStream stream = simulate(scenario, model, seeds[i]);
    RunReport a = evaluate(scenario, model, stream, ResidualSetup::ImuGnss, seeds[i]);
    RunReport b = evaluate(scenario, model, stream, ResidualSetup::Full, seeds[i]);
    SeedComparison& c = out.seeds[i];
    c.seed = seeds[i];
    WindowMean pre[2], slip[2], post[2];
    for (std::size_t k = 0; k < a.rows.size(); ++k) {
      const double t = a.rows[k].time;
      const double e[2] = {a.rows[k].positionSq, b.rows[k].positionSq};
      for (int j = 0; j < 2; ++j) {
        if (t < scenario.evaluation.onset) pre[j].add(e[j]);
        if (inSlip(scenario, t)) slip[j].add(e[j]);
        else if (t >= scenario.evaluation.converged) post[j].add(e[j]);
      }
    }
    c.preImuGnss = pre[0].value();
    c.preFull = pre[1].value();
    c.slipImuGnss = slip[0].value();
    c.slipFull = slip[1].value();
    c.postImuGnss = post[0].value();
    c.postFull = post[1].value();
    const auto ea = biasErrors(scenario, a), eb = biasErrors(scenario, b);
    c.accBiasError = ea.first;
    c.gyroBiasError = ea.second;
    c.fullAccBiasError = eb.first;
    c.fullGyroBiasError = eb.second;
    c.sseImuGnss = a.position.sse;
    c.sseFull = b.position.sse;
    if (i < out.imuGnss.size()) {
      out.imuGnss[i] = std::move(a);
      out.full[i] = std::move(b);
    }
  });
  return out;
}

std::string SetupComparison::before() const
{
  return windows.before ? majority(seeds, &SeedComparison::preImuGnss, &SeedComparison::preFull) : "none";
}

std::string SetupComparison::duringSlip() const
{
  return windows.slip ? majority(seeds, &SeedComparison::slipImuGnss, &SeedComparison::slipFull) : "none";
}

double SetupComparison::afterGap() const
{
  double gap = 0.0;
  for (const SeedComparison& s : seeds) gap += std::sqrt(s.postImuGnss) - std::sqrt(s.postFull);
  return seeds.empty() ? 0.0 : gap / static_cast<double>(seeds.size());
}

std::string SetupComparison::after() const
{
  if (!windows.after) return "none";
  const std::string w = majority(seeds, &SeedComparison::postImuGnss, &SeedComparison::postFull);
  if (w != "tie" && std::abs(afterGap()) <= afterSignificance) return "tie";
  return w;
}

std::string SetupComparison::verdict() const
{
  const std::string b = before(), s = duringSlip(), a = after();
  bool allTie = true;
  for (const std::string* w : {&b, &s, &a}) allTie = allTie && (*w == "tie" || *w == "none");
  if (allTie) return "tie";
  return "before_onset=" + b + ";during_slip=" + s + ";after_convergence=" + a;
}

int SetupComparison::countProtocolHolds(double biasTolerance) const
{
  int n = 0;
  for (const SeedComparison& s : seeds) {
    n += s.fullBetterBefore() && s.biasesConverged(biasTolerance) && s.imuGnssBetterDuringSlip();
  }
  return n;
}

void SetupComparison::writeSummary(std::ostream& out) const
{
  out << "kind = comparison\n";
  out << "schema_version = " << kScenarioSchemaVersion << "\n";
  out << "seeds = " << seeds.size() << "\n";
  out << "verdict = " << verdict() << "\n";
  out << "before_onset = " << before() << "\n";
  out << "during_slip = " << duringSlip() << "\n";
  out << "after_convergence = " << after() << "\n";
  out << "after_convergence.rmse_gap = " << num(afterGap()) << "\n";
  out << "after_convergence.significance = " << num(afterSignificance) << "\n";
  out << "protocol_holds = " << countProtocolHolds(0.1) << "\n";
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const SeedComparison& s = seeds[i];
    const std::string p = "run." + std::to_string(i) + ".";
    out << p << "seed = " << s.seed << "\n";
    out << p << "sse_position.imu_gnss = " << num(s.sseImuGnss) << "\n";
    out << p << "sse_position.full = " << num(s.sseFull) << "\n";
    out << p << "before_onset.imu_gnss = " << num(s.preImuGnss) << "\n";
    out << p << "before_onset.full = " << num(s.preFull) << "\n";
    out << p << "during_slip.imu_gnss = " << num(s.slipImuGnss) << "\n";
    out << p << "during_slip.full = " << num(s.slipFull) << "\n";
    out << p << "after_convergence.imu_gnss = " << num(s.postImuGnss) << "\n";
    out << p << "after_convergence.full = " << num(s.postFull) << "\n";
    out << p << "acc_bias_error.imu_gnss = " << num(s.accBiasError) << "\n";
    out << p << "acc_bias_error.full = " << num(s.fullAccBiasError) << "\n";
    out << p << "gyro_bias_error.imu_gnss = " << num(s.gyroBiasError) << "\n";
    out << p << "gyro_bias_error.full = " << num(s.fullGyroBiasError) << "\n";
  }
}

void SetupComparison::writeCurves(std::ostream& out) const
{
  out << "time,sq_position_imu_gnss,sq_position_full,sq_orientation_imu_gnss,sq_orientation_full\n";
  if (imuGnss.empty()) return;
  const RunReport& a = imuGnss.front();
  const RunReport& b = full.front();
  for (std::size_t k = 0; k < a.rows.size(); ++k) {
    out << num(a.rows[k].time) << ',' << num(a.rows[k].positionSq) << ',' << num(b.rows[k].positionSq) << ','
        << num(a.rows[k].orientationSq) << ',' << num(b.rows[k].orientationSq) << '\n';
  }
}

}  // namespace walkex
