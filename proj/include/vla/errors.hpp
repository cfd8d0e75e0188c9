#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vla {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Misconfigured network, sweep, or CLI input.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Operation called in the wrong lifecycle state (e.g. backward before forward).
class StateError : public Error {
 public:
  using Error::Error;
};

class IkError : public Error {
 public:
  IkError(const std::string& what, double residual) : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

class SamplingError : public Error {
 public:
  using Error::Error;
};

class DemoError : public Error {
 public:
  using Error::Error;
};

class TaskError : public Error {
 public:
  using Error::Error;
};

class PerceptionError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::size_t epoch) : Error(what), epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

}  // namespace vla
