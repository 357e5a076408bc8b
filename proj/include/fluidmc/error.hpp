#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace fluidmc {

/// A located message produced while reading or validating user input.
struct Diagnostic {
  int line = 0;
  int column = 0;
  std::string message;

  std::string str() const;
};

/// Thrown when input text cannot be turned into a model or formula.
class DiagnosticError : public std::runtime_error {
 public:
  explicit DiagnosticError(std::vector<Diagnostic> diags);
  const std::vector<Diagnostic>& diagnostics() const { return diags_; }

 private:
  std::vector<Diagnostic> diags_;
};

class NotSingleAgentCompatible : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Base class for failures of the numerical machinery (exit code 2 in the CLI).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class StepSizeUnderflow : public NumericError {
 public:
  StepSizeUnderflow(double t, double h);
  double time() const { return t_; }

 private:
  double t_;
};

class NonFiniteValue : public NumericError {
 public:
  using NumericError::NumericError;
};

class DomainError : public NumericError {
 public:
  using NumericError::NumericError;
};

class NonRobust : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace fluidmc
