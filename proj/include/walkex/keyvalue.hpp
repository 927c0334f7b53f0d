#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "walkex/lie.hpp"

namespace walkex {

/**
 * Flat "key.path = value" document.
 *
 * Lines starting with '#' are comments. Values are raw strings; numeric
 * lists are comma separated. Every accessor marks the key as consumed so
 * that checkAllConsumed() can reject unknown keys by path.
 */
class KeyValueDoc
{
 public:
  static KeyValueDoc parse(const std::string& text, const std::string& source = "<string>");
  static KeyValueDoc load(const std::string& path);

  bool has(const std::string& key) const;

  std::string getString(const std::string& key) const;
  std::string getString(const std::string& key, const std::string& fallback) const;
  double getDouble(const std::string& key) const;
  double getDouble(const std::string& key, double fallback) const;
  int getInt(const std::string& key) const;
  int getInt(const std::string& key, int fallback) const;
  bool getBool(const std::string& key, bool fallback) const;
  std::vector<double> getList(const std::string& key) const;
  std::vector<double> getList(const std::string& key, std::size_t expectedSize) const;
  Vec3 getVec3(const std::string& key) const;
  Vec3 getVec3(const std::string& key, const Vec3& fallback) const;

  /// Distinct next path segments below prefix, e.g. children("plant") -> {"0","1"}.
  std::vector<std::string> children(const std::string& prefix) const;

  /// Throws ConfigError naming the first key that no accessor touched.
  void checkAllConsumed() const;

  const std::map<std::string, std::string>& entries() const { return entries_; }
  const std::string& source() const { return source_; }

  void set(const std::string& key, const std::string& value) { entries_[key] = value; }

 private:
  const std::string& raw(const std::string& key) const;

  std::string source_;
  std::map<std::string, std::string> entries_;
  std::map<std::string, int> lines_;
  mutable std::set<std::string> consumed_;
};

std::string formatDouble(double value);
std::string formatList(const std::vector<double>& values);
std::string formatVec3(const Vec3& v);

}  // namespace walkex
