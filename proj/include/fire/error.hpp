#pragma once

#include <stdexcept>
#include <string>

namespace fire {

// Error categories map one-to-one onto CLI exit codes (see tools/fire_main.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class CheckpointPayloadError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class FingerprintMismatchError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

}  // namespace fire
