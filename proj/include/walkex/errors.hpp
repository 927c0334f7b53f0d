#pragma once

#include <stdexcept>
#include <string>

namespace walkex {

/// Bad or unknown entry in a structured text file. keyPath() names the entry.
class ConfigError : public std::runtime_error
{
 public:
  ConfigError(std::string keyPath, const std::string& what)
      : std::runtime_error(keyPath.empty() ? what : keyPath + ": " + what), keyPath_(std::move(keyPath))
  {
  }
  const std::string& keyPath() const { return keyPath_; }

 private:
  std::string keyPath_;
};

class OutOfRange : public std::runtime_error
{
 public:
  using std::runtime_error::runtime_error;
};

class SingularMapping : public std::runtime_error
{
 public:
  using std::runtime_error::runtime_error;
};

class ModelError : public std::runtime_error
{
 public:
  using std::runtime_error::runtime_error;
};

class SingularInformation : public std::runtime_error
{
 public:
  using std::runtime_error::runtime_error;
};

class OutOfDomain : public std::runtime_error
{
 public:
  using std::runtime_error::runtime_error;
};

class InsufficientExcitation : public std::runtime_error
{
 public:
  using std::runtime_error::runtime_error;
};

/// Priority-1 inequality set cannot be satisfied; task/row name the worst violated row.
class Infeasible : public std::runtime_error
{
 public:
  Infeasible(const std::string& what, int task, int row) : std::runtime_error(what), task_(task), row_(row) {}
  int task() const { return task_; }
  int row() const { return row_; }

 private:
  int task_;
  int row_;
};

}  // namespace walkex
