#include "walkex/keyvalue.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "walkex/errors.hpp"

namespace walkex {

namespace {

std::string trim(const std::string& s)
{
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) {
    return {};
  }
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parseNumber(const std::string& key, const std::string& token)
{
  const std::string t = trim(token);
  if (t.empty()) {
    throw ConfigError(key, "expected a number, got an empty field");
  }
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || errno == ERANGE) {
    throw ConfigError(key, "expected a number, got '" + t + "'");
  }
  return v;
}

}  // namespace

KeyValueDoc KeyValueDoc::parse(const std::string& text, const std::string& source)
{
  KeyValueDoc doc;
  doc.source_ = source;
  std::istringstream in(text);
  std::string line;
  int lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') {
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("", source + ":" + std::to_string(lineNo) + ": expected 'key = value'");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("", source + ":" + std::to_string(lineNo) + ": empty key");
    }
    if (doc.entries_.count(key) != 0) {
      throw ConfigError(key, "duplicate key (line " + std::to_string(lineNo) + ")");
    }
    doc.entries_[key] = value;
    doc.lines_[key] = lineNo;
  }
  return doc;
}

KeyValueDoc KeyValueDoc::load(const std::string& path)
{
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("", "cannot open '" + path + "'");
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

bool KeyValueDoc::has(const std::string& key) const { return entries_.count(key) != 0; }

const std::string& KeyValueDoc::raw(const std::string& key) const
{
  const auto it = entries_.find(key);
  if (it == entries_.end()) {
    throw ConfigError(key, "missing required key");
  }
  consumed_.insert(key);
  return it->second;
}

std::string KeyValueDoc::getString(const std::string& key) const { return raw(key); }

std::string KeyValueDoc::getString(const std::string& key, const std::string& fallback) const
{
  return has(key) ? raw(key) : fallback;
}

double KeyValueDoc::getDouble(const std::string& key) const { return parseNumber(key, raw(key)); }

double KeyValueDoc::getDouble(const std::string& key, double fallback) const
{
  return has(key) ? getDouble(key) : fallback;
}

int KeyValueDoc::getInt(const std::string& key) const
{
  const double v = getDouble(key);
  if (v != static_cast<double>(static_cast<long long>(v))) {
    throw ConfigError(key, "expected an integer");
  }
  return static_cast<int>(v);
}

int KeyValueDoc::getInt(const std::string& key, int fallback) const { return has(key) ? getInt(key) : fallback; }

bool KeyValueDoc::getBool(const std::string& key, bool fallback) const
{
  if (!has(key)) {
    return fallback;
  }
  const std::string v = raw(key);
  if (v == "true" || v == "1" || v == "yes") {
    return true;
  }
  if (v == "false" || v == "0" || v == "no") {
    return false;
  }
  throw ConfigError(key, "expected a boolean, got '" + v + "'");
}

std::vector<double> KeyValueDoc::getList(const std::string& key) const
{
  const std::string& v = raw(key);
  std::vector<double> out;
  if (trim(v).empty()) {
    return out;
  }
  std::stringstream ss(v);
  std::string token;
  while (std::getline(ss, token, ',')) {
    out.push_back(parseNumber(key, token));
  }
  return out;
}

std::vector<double> KeyValueDoc::getList(const std::string& key, std::size_t expectedSize) const
{
  auto out = getList(key);
  if (out.size() != expectedSize) {
    throw ConfigError(key, "expected " + std::to_string(expectedSize) + " values, got " + std::to_string(out.size()));
  }
  return out;
}

Vec3 KeyValueDoc::getVec3(const std::string& key) const
{
  const auto v = getList(key, 3);
  return {v[0], v[1], v[2]};
}

Vec3 KeyValueDoc::getVec3(const std::string& key, const Vec3& fallback) const
{
  return has(key) ? getVec3(key) : fallback;
}

std::vector<std::string> KeyValueDoc::children(const std::string& prefix) const
{
  std::vector<std::string> out;
  const std::string p = prefix + ".";
  for (const auto& [key, value] : entries_) {
    if (key.compare(0, p.size(), p) != 0) {
      continue;
    }
    const std::string rest = key.substr(p.size());
    const std::string head = rest.substr(0, rest.find('.'));
    if (out.empty() || out.back() != head) {
      bool seen = false;
      for (const auto& h : out) {
        seen = seen || h == head;
      }
      if (!seen) {
        out.push_back(head);
      }
    }
  }
  return out;
}

void KeyValueDoc::checkAllConsumed() const
{
  for (const auto& [key, value] : entries_) {
    if (consumed_.count(key) == 0) {
      throw ConfigError(key, "unknown key (line " + std::to_string(lines_.count(key) ? lines_.at(key) : 0) + ")");
    }
  }
}

std::string formatDouble(double value)
{
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", value);
  return buf;
}

std::string formatList(const std::vector<double>& values)
{
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i != 0) {
      out += ", ";
    }
    out += formatDouble(values[i]);
  }
  return out;
}

std::string formatVec3(const Vec3& v) { return formatList({v.x(), v.y(), v.z()}); }

}  // namespace walkex
