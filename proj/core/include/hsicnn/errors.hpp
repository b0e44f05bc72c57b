#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace hsicnn {

// Base of every error thrown by the library. The CLI maps subclasses onto
// exit codes: ConfigError -> 1, DataError -> 2, NumericError -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Architecture description rejected (mismatched branches, bad patch size, ...).
class SpecError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class TransferError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::uint64_t offset)
      : DataError(what + " (at offset " + std::to_string(offset) + ")"), offset_(offset) {}
  explicit ParseError(const std::string& what) : DataError(what) {}

  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_ = 0;
};

class VersionError : public DataError {
 public:
  using DataError::DataError;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace hsicnn
