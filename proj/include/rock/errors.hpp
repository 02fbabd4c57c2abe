#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace rock {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument lies outside the domain of an operation.
class InputDomainError : public Error {
 public:
  using Error::Error;
};

/// Invalid parameters passed to a constructor.
class ConstructionError : public Error {
 public:
  using Error::Error;
};

/// A state component became NaN or infinite.
class SimulationDiverged : public Error {
 public:
  SimulationDiverged(std::uint64_t step_index, const std::string& what)
      : Error("simulation diverged at step " + std::to_string(step_index) +
              ": " + what),
        step_index_(step_index) {}

  std::uint64_t step_index() const noexcept { return step_index_; }

 private:
  std::uint64_t step_index_;
};

/// The commanded direction cannot be reached by any pendulum angle.
class DegenerateCommand : public Error {
 public:
  using Error::Error;
};

/// A network parameter or activation is non-finite, or a model file is
/// malformed.
class CorruptedModel : public Error {
 public:
  using Error::Error;
};

class DegenerateCalibration : public Error {
 public:
  explicit DegenerateCalibration(std::size_t layer)
      : Error("calibration produced zero dynamic range in layer " +
              std::to_string(layer)),
        layer_(layer) {}

  std::size_t layer() const noexcept { return layer_; }

 private:
  std::size_t layer_;
};

/// An API was used out of order (for instance stepping before reset).
class UsageError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace rock
