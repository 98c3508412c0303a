#pragma once

#include <stdexcept>
#include <string>

namespace mga {

// Every module error derives from Error so callers (the CLI in particular)
// can map a failure to a stable code without string matching.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* code() const noexcept { return "ERROR"; }
};

class DimensionError : public Error {
 public:
  using Error::Error;
  const char* code() const noexcept override { return "DIMENSION_ERROR"; }
};

class NumericError : public Error {
 public:
  using Error::Error;
  const char* code() const noexcept override { return "NUMERIC_ERROR"; }
};

class StateError : public Error {
 public:
  using Error::Error;
  const char* code() const noexcept override { return "STATE_ERROR"; }
};

class ContractError : public Error {
 public:
  using Error::Error;
  const char* code() const noexcept override { return "CONTRACT_ERROR"; }
};

class PreconditionError : public ContractError {
 public:
  using ContractError::ContractError;
  const char* code() const noexcept override { return "PRECONDITION_ERROR"; }
};

class GeometryError : public Error {
 public:
  using Error::Error;
  const char* code() const noexcept override { return "GEOMETRY_ERROR"; }
};

class DataError : public Error {
 public:
  using Error::Error;
  const char* code() const noexcept override { return "DATA_ERROR"; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  const char* code() const noexcept override { return "CONFIG_ERROR"; }
};

}  // namespace mga
