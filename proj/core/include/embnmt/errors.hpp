#pragma once

#include <stdexcept>
#include <string>

namespace embnmt {

// Broken caller-side precondition (shape mismatch, id out of range, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Input data whose structure does not match what the reader expects.
class StructuralError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public StructuralError {
 public:
  FormatError(const std::string& what, std::size_t line)
      : StructuralError(what + " (line " + std::to_string(line) + ")"), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid combination of settings; reported to CLI users as a usage error.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Checkpoint contents that disagree with themselves or with supplied vocabularies.
class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite loss or gradient during optimization.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace embnmt
