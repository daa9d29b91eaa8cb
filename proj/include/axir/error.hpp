#pragma once

#include <stdexcept>
#include <string>

namespace axir {

// Input data failed validation (shapes, names, file contents, ranges).
// The CLI maps these to exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numeric degeneracy that makes a result meaningless. CLI exit code 3.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public DataError {
 public:
  using DataError::DataError;
};

class DegenerateRowError : public NumericError {
 public:
  using NumericError::NumericError;
};

class FormatError : public DataError {
 public:
  using DataError::DataError;
};

class MissingTensorError : public DataError {
 public:
  explicit MissingTensorError(const std::string& name)
      : DataError("missing tensor: " + name), name_(name) {}
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

class ShapeMismatchError : public DataError {
 public:
  using DataError::DataError;
};

class SequenceError : public DataError {
 public:
  using DataError::DataError;
};

class PatchError : public DataError {
 public:
  using DataError::DataError;
};

// A perturbation does not apply to the given (query, doc, term); the
// triple is skipped rather than treated as a failure.
class NotApplicableError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace axir
