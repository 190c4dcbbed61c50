#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vitalhmm {

/// Base class of every error raised by the library. `category()` is a short
/// stable token used in machine-readable CLI error lines.
class Error : public std::runtime_error {
 public:
  Error(std::string_view category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  std::string_view category() const noexcept { return category_; }

 private:
  std::string_view category_;
};

/// A precondition of an operation was violated (shape, dimension, empty input).
struct ContractError : Error {
  explicit ContractError(const std::string& what) : Error("contract", what) {}
};

/// A non-finite value appeared where a finite one is required.
struct NumericalError : Error {
  explicit NumericalError(const std::string& what) : Error("numerical", what) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

struct SplitError : Error {
  explicit SplitError(const std::string& what) : Error("split", what) {}
};

struct FitError : Error {
  explicit FitError(const std::string& what) : Error("fit", what) {}
};

struct InitError : Error {
  explicit InitError(const std::string& what) : Error("init", what) {}
};

struct TrainingError : Error {
  explicit TrainingError(const std::string& what) : Error("training", what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error("io", what) {}
};

}  // namespace vitalhmm
