#pragma once

#include <stdexcept>
#include <string>

namespace msgcf {

// Shape or extent disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A precondition on values (not shapes) was violated.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Graph has a node with zero degree where a normalization needs d_i > 0.
class DegenerateDegreeError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Not enough classes or windows to satisfy an episode request.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DataErrorKind { missing_file, malformed_manifest, ragged_row, non_numeric, duplicate_class };

// Malformed or missing input files. Messages name the file and line.
class DataError : public std::runtime_error {
 public:
  DataError(DataErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  DataErrorKind kind() const noexcept { return kind_; }

 private:
  DataErrorKind kind_;
};

// Invalid user configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values detected during training or evaluation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace msgcf
