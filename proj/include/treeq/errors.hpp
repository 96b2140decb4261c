#pragma once

#include <stdexcept>
#include <string>

namespace treeq {

/// Base class for all treeq errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Bad input: malformed config, invalid network description, out-of-range
/// parameters. The CLI maps these to exit code 2.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

/// Network description violates a structural or stability requirement.
class ValidationError : public ConfigError {
 public:
  enum class Kind {
    NotATree,
    Unstable,
    ZeroServiceRate,
    DisconnectedNode,
  };

  ValidationError(Kind kind, const std::string& msg)
      : ConfigError(msg), kind(kind) {}

  Kind kind;
};

/// Resource or convergence failure at run time. The CLI maps these to exit
/// code 3.
class RuntimeLimitError : public Error {
 public:
  enum class Kind {
    DimensionTooLarge,
    LatticeTooLarge,
    NoConvergence,
    StepBudgetExceeded,
    NonPositive,
  };

  RuntimeLimitError(Kind kind, const std::string& msg)
      : Error(msg), kind(kind) {}

  Kind kind;
};

}  // namespace treeq
