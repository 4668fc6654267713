#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ualf {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A file could not be read, decoded or written.
class IoError : public Error {
 public:
  using Error::Error;
};

// A caller violated a documented precondition (bad sizes, bounds, labels).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Tensor dimensions incompatible with a network's stride plan.
class ShapeError : public ContractError {
 public:
  using ContractError::ContractError;
};

class SingularTransmissionError : public ContractError {
 public:
  using ContractError::ContractError;
};

// A training loss became NaN or infinite.
class DivergenceError : public Error {
 public:
  DivergenceError(std::int64_t step, const std::string& what)
      : Error("divergence at step " + std::to_string(step) + ": " + what), step_(step) {}
  std::int64_t step() const noexcept { return step_; }

 private:
  std::int64_t step_;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

// Bad configuration key or value, or a missing required setting.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace ualf
