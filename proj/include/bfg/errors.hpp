#pragma once

#include <stdexcept>
#include <string>

namespace bfg {

// Every error carries the process exit code the CLI reports for it.
class Error : public std::runtime_error {
 public:
  Error(const std::string& kind, const std::string& what, int exit_code)
      : std::runtime_error(what), kind_(kind), exit_code_(exit_code) {}

  const std::string& kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return exit_code_; }

 private:
  std::string kind_;
  int exit_code_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config_error", what, 2) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error("data_error", what, 3) {}
};

class ParseError : public DataError {
 public:
  using DataError::DataError;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

class SamplingError : public DataError {
 public:
  using DataError::DataError;
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error("numeric_error", what, 4) {}
};

// Violated precondition of a library call (shape mismatch, empty mask, ...).
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error("contract_error", what, 2) {}
};

}  // namespace bfg
