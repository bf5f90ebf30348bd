#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nnpc {

/// Base class for every error raised by the workbench. `code()` is a short
/// machine-readable tag used by the CLI error line.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  [[nodiscard]] const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

/// Integration produced a non-finite state (step too large or a bad model).
class IntegrationError : public Error {
 public:
  IntegrationError(double time, const std::string& message)
      : Error("integration", message), time_(time) {}
  [[nodiscard]] double time() const noexcept { return time_; }

 private:
  double time_;
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& message) : Error("dimension", message) {}
};

class NotDifferentiableError : public Error {
 public:
  explicit NotDifferentiableError(const std::string& message)
      : Error("not_differentiable", message) {}
};

class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t epoch, const std::string& message)
      : Error("divergence", message), epoch_(epoch) {}
  [[nodiscard]] std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

class TuningError : public Error {
 public:
  TuningError(double achievable_margin_deg, const std::string& message)
      : Error("tuning", message), achievable_(achievable_margin_deg) {}
  /// Best phase margin (degrees) reachable at the requested crossover.
  [[nodiscard]] double achievable_margin() const noexcept { return achievable_; }

 private:
  double achievable_;
};

class CollectionError : public Error {
 public:
  CollectionError(std::size_t sample, double v_ref, double r_load, const std::string& message)
      : Error("collection", message), sample_(sample), v_ref_(v_ref), r_load_(r_load) {}
  [[nodiscard]] std::size_t sample() const noexcept { return sample_; }
  [[nodiscard]] double v_ref() const noexcept { return v_ref_; }
  [[nodiscard]] double r_load() const noexcept { return r_load_; }

 private:
  std::size_t sample_;
  double v_ref_;
  double r_load_;
};

class RolloutError : public Error {
 public:
  RolloutError(std::size_t step, const std::string& message)
      : Error("rollout", message), step_(step) {}
  [[nodiscard]] std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class OptimizationError : public Error {
 public:
  explicit OptimizationError(const std::string& message) : Error("optimization", message) {}
};

class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& message)
      : Error("config", message), key_(std::move(key)) {}
  [[nodiscard]] const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& message) : Error("data", message) {}
};

}  // namespace nnpc
