#pragma once

#include <stdexcept>
#include <string>

namespace nce {

// Process exit codes used by the command-line front end.
enum class ExitCode : int {
  kSuccess = 0,
  kValidation = 2,
  kNumeric = 3,
  kBudget = 4,
};

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual ExitCode exit_code() const noexcept = 0;
};

/// Bad shapes, lengths, flags or file contents.
class ConfigError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kValidation; }
};

/// Arguments outside the mathematical domain of an operation
/// (empty dataset, zero noise mass, all-zero counts).
class DomainError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kValidation; }
};

/// A required modelling assumption does not hold for the supplied problem.
class PreconditionError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kValidation; }
};

class NumericError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kNumeric; }
};

class SingularityError : public NumericError {
 public:
  SingularityError(const std::string& what, double min_eigenvalue)
      : NumericError(what), min_eigenvalue_(min_eigenvalue) {}
  double min_eigenvalue() const noexcept { return min_eigenvalue_; }

 private:
  double min_eigenvalue_;
};

class BudgetError : public Error {
 public:
  BudgetError(const std::string& what, double required)
      : Error(what), required_(required) {}
  ExitCode exit_code() const noexcept override { return ExitCode::kBudget; }
  double required() const noexcept { return required_; }

 private:
  double required_;
};

}  // namespace nce
