#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <set>

#include <json.hpp>

#include "walkex/errors.hpp"
#include "walkex/estimator.hpp"

namespace walkex {

namespace {

const char* const kPistonNames[3] = {"abad", "flexion", "steering"};

std::string num(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string shortNum(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::vector<std::string> splitCsv(const std::string& line)
{
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

double parseNumber(const std::string& s, const std::string& where)
{
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ConfigError(where, "not a number: '" + s + "'");
  }
  if (used != s.size()) throw ConfigError(where, "not a number: '" + s + "'");
  return v;
}

}  // namespace

std::vector<std::string> sensorCsvHeader()
{
  std::vector<std::string> h = {"t"};
  for (const char* p : {"f", "w", "wb", "gnss1", "gnss2"}) {
    for (const char* a : {"x", "y", "z"}) h.push_back(std::string(p) + "_" + a);
  }
  h.push_back("psi");
  for (LegId leg : kLegIds) {
    for (const char* c : kPistonNames) h.push_back(std::string("beta_") + legName(leg) + "_" + c);
  }
  for (LegId leg : kLegIds) h.push_back(std::string("wheel_") + legName(leg));
  for (LegId leg : kLegIds) h.push_back(std::string("contact_") + legName(leg));
  for (const char* a : {"x", "y", "z"}) h.push_back(std::string("n_") + a);
  return h;
}

void writeSensorCsv(std::ostream& out, const std::vector<SensorFrame>& frames)
{
  const auto header = sensorCsvHeader();
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const SensorFrame& f : frames) {
    out << num(f.time);
    auto vec = [&](const Vec3& v) { out << ',' << num(v.x()) << ',' << num(v.y()) << ',' << num(v.z()); };
    vec(f.cabinAcc);
    vec(f.cabinGyro);
    vec(f.chassisGyro);
    for (int k = 0; k < 2; ++k) {
      if (f.gnss[k]) vec(*f.gnss[k]);
      else out << ",,,";
    }
    out << ',' << num(f.turnAngle);
    for (int i = 0; i < 4; ++i) vec(f.pistons[i]);
    for (int i = 0; i < 4; ++i) out << ',' << (f.wheelSpeeds[i] ? num(*f.wheelSpeeds[i]) : std::string());
    for (int i = 0; i < 4; ++i) out << ',' << (f.contact[i] ? 1 : 0);
    vec(f.normal);
    out << '\n';
  }
}

void writeSensorJsonl(std::ostream& out, const std::vector<SensorFrame>& frames)
{
  using nlohmann::json;
  auto arr = [](const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); };
  for (const SensorFrame& f : frames) {
    json j;
    j["t"] = f.time;
    j["f"] = arr(f.cabinAcc);
    j["w"] = arr(f.cabinGyro);
    j["wb"] = arr(f.chassisGyro);
    for (int k = 0; k < 2; ++k) j["gnss" + std::to_string(k + 1)] = f.gnss[k] ? arr(*f.gnss[k]) : json(nullptr);
    j["psi"] = f.turnAngle;
    for (int i = 0; i < 4; ++i) {
      const std::string leg = legName(kLegIds[i]);
      j["beta"][leg] = arr(f.pistons[i]);
      j["wheel"][leg] = f.wheelSpeeds[i] ? json(*f.wheelSpeeds[i]) : json(nullptr);
      j["contact"][leg] = f.contact[i];
    }
    j["n"] = arr(f.normal);
    out << j.dump() << '\n';
  }
}

namespace {

SensorFrame frameFromJson(const nlohmann::json& j, const std::string& where)
{
  SensorFrame f;
  auto vec = [&](const nlohmann::json& v, const std::string& key) {
    if (!v.is_array() || v.size() != 3) throw ConfigError(where + ":" + key, "expected an array of 3 numbers");
    return Vec3(v[0].get<double>(), v[1].get<double>(), v[2].get<double>());
  };
  static const std::set<std::string> known = {"t", "f", "w", "wb", "gnss1", "gnss2", "psi", "beta", "wheel", "contact", "n"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw ConfigError(where + ":" + it.key(), "unknown field");
  }
  try {
    f.time = j.at("t").get<double>();
    f.cabinAcc = vec(j.at("f"), "f");
    f.cabinGyro = vec(j.at("w"), "w");
    f.chassisGyro = vec(j.at("wb"), "wb");
    for (int k = 0; k < 2; ++k) {
      const std::string key = "gnss" + std::to_string(k + 1);
      if (j.contains(key) && !j[key].is_null()) f.gnss[k] = vec(j[key], key);
    }
    f.turnAngle = j.at("psi").get<double>();
    for (int i = 0; i < 4; ++i) {
      const std::string leg = legName(kLegIds[i]);
      f.pistons[i] = vec(j.at("beta").at(leg), "beta." + leg);
      if (j.contains("wheel") && j["wheel"].contains(leg) && !j["wheel"][leg].is_null()) {
        f.wheelSpeeds[i] = j["wheel"][leg].get<double>();
      }
      if (j.contains("contact") && j["contact"].contains(leg)) f.contact[i] = j["contact"][leg].get<bool>();
    }
    if (j.contains("n")) f.normal = vec(j["n"], "n");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where, e.what());
  }
  return f;
}

}  // namespace

std::vector<SensorFrame> readSensorStream(std::istream& in, const std::string& source)
{
  std::vector<SensorFrame> frames;
  std::string line;
  int lineNo = 0;
  bool json = false;
  bool decided = false;
  std::map<std::string, int> column;
  const auto header = sensorCsvHeader();
  while (std::getline(in, line)) {
    ++lineNo;
    if (line.empty() || line == "\r") continue;
    const std::string where = source + ":" + std::to_string(lineNo);
    if (!decided) {
      decided = true;
      json = line.front() == '{';
      if (!json) {
        const auto cols = splitCsv(line);
        for (std::size_t c = 0; c < cols.size(); ++c) {
          if (std::find(header.begin(), header.end(), cols[c]) == header.end()) {
            throw ConfigError(where + ":" + cols[c], "unknown column");
          }
          column[cols[c]] = static_cast<int>(c);
        }
        for (const std::string& h : header) {
          if (!column.count(h)) throw ConfigError(where + ":" + h, "missing column");
        }
        continue;
      }
    }
    SensorFrame f;
    if (json) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(where, e.what());
      }
      f = frameFromJson(j, where);
    } else {
      const auto cells = splitCsv(line);
      if (cells.size() != column.size()) throw ConfigError(where, "wrong number of fields");
      auto cell = [&](const std::string& name) -> const std::string& { return cells[column.at(name)]; };
      auto number = [&](const std::string& name) { return parseNumber(cell(name), where + ":" + name); };
      auto vec = [&](const std::string& p) { return Vec3(number(p + "_x"), number(p + "_y"), number(p + "_z")); };
      f.time = number("t");
      f.cabinAcc = vec("f");
      f.cabinGyro = vec("w");
      f.chassisGyro = vec("wb");
      for (int k = 0; k < 2; ++k) {
        const std::string p = "gnss" + std::to_string(k + 1);
        if (!cell(p + "_x").empty()) f.gnss[k] = vec(p);
      }
      f.turnAngle = number("psi");
      for (int i = 0; i < 4; ++i) {
        const std::string leg = legName(kLegIds[i]);
        for (int c = 0; c < 3; ++c) f.pistons[i](c) = number("beta_" + leg + "_" + kPistonNames[c]);
        if (!cell("wheel_" + leg).empty()) f.wheelSpeeds[i] = number("wheel_" + leg);
        f.contact[i] = number("contact_" + leg) != 0.0;
      }
      f.normal = vec("n");
    }
    f.validate();
    if (!frames.empty() && !(f.time > frames.back().time)) {
      throw ConfigError(where + ":t", "timestamps must be strictly increasing");
    }
    frames.push_back(f);
  }
  return frames;
}

std::vector<std::string> estimateLogHeader(ResidualSetup setup)
{
  std::vector<std::string> h = {"t"};
  auto add = [&](const std::string& p) {
    for (const char* a : {"x", "y", "z"}) h.push_back(p + "_" + a);
  };
  add("r");
  add("phi");
  add("v");
  add("bf");
  add("bw");
  h.push_back("psi");
  if (setup == ResidualSetup::Full) {
    for (LegId leg : kLegIds) add(std::string("p_") + legName(leg));
  }
  for (const char* c : {"innov_imu", "innov_gnss", "innov_roll", "innov_leg"}) h.push_back(c);
  for (const char* p : {"r", "phi", "v", "bf", "bw"}) add(std::string("sigma3_") + p);
  return h;
}

void writeEstimateRow(std::ostream& out, double time, const Estimator& estimator)
{
  const EstimatorState& s = estimator.state();
  out << shortNum(time);
  auto vec = [&](const Vec3& v) { out << ',' << shortNum(v.x()) << ',' << shortNum(v.y()) << ',' << shortNum(v.z()); };
  vec(s.position);
  vec(s.orientation.log());
  vec(s.velocity);
  vec(s.accBias);
  vec(s.gyroBias);
  out << ',' << shortNum(s.turnAngle);
  if (estimator.setup() == ResidualSetup::Full) {
    for (const Vec3& p : s.landmarks) vec(p);
  }
  const InnovationNorms& in = estimator.innovations();
  out << ',' << shortNum(in.imu) << ',' << shortNum(in.gnss) << ',' << shortNum(in.rolling) << ',' << shortNum(in.legs);
  const Eigen::VectorXd var = estimator.covariance().diagonal();
  for (int k = 0; k < 15; ++k) out << ',' << shortNum(3.0 * std::sqrt(std::max(0.0, var(k))));
  out << '\n';
}

}  // namespace walkex
