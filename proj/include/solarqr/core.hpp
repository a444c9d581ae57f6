#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace solarqr {

template <class T, int Rows = Eigen::Dynamic, int Cols = Eigen::Dynamic>
using matrix = Eigen::Matrix<T, Rows, Cols>;

template <class T, int Rows = Eigen::Dynamic>
using vector = matrix<T, Rows, 1>;

using real = double;
using mat = matrix<real>;
using vec = vector<real>;
using index_t = Eigen::Index;

/// Number of hourly steps in one forecast day (also the forecast horizon H).
inline constexpr int kHoursPerDay = 24;

// Error taxonomy. Each leaf maps onto one CLI exit class (see bench).

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad or missing configuration (exit code 1).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Anything wrong with input data: unparsable cells, bounds, gaps (exit code 2).
class DataError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  using DataError::DataError;
};

class ValidationError : public DataError {
 public:
  using DataError::DataError;
};

class AlignmentError : public DataError {
 public:
  using DataError::DataError;
};

class SplitError : public DataError {
 public:
  using DataError::DataError;
};

class ScoringError : public DataError {
 public:
  using DataError::DataError;
};

/// Violated operation precondition (shape mismatch, out-of-range argument).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

class LookupError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

/// Model fitting failed (exit code 3).
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Solver hit its iteration budget; carries the best objective it reached.
class ConvergenceError : public TrainingError {
 public:
  ConvergenceError(const std::string& what, real best_objective)
      : TrainingError(what), best_objective_(best_objective) {}
  real best_objective() const noexcept { return best_objective_; }

 private:
  real best_objective_;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw PreconditionError(message);
}

/// Stateless 64-bit mixer used to derive per-model seeds from (global seed, model id).
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t global_seed, std::uint64_t model_id) noexcept {
  return splitmix64(splitmix64(global_seed) ^ (model_id * 0xD1B54A32D192ED03ULL));
}

}  // namespace solarqr
