#pragma once

#include <stdexcept>
#include <string>

namespace spt {

/// Operand extents are incompatible.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A caller broke an operation's precondition (non-scalar loss, missing record, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A mask row has no support, so a softmax over it is undefined.
class DegenerateRowError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Invalid configuration or hyperparameter.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed input data (annotation files, skeleton files, checkpoints).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File system failures, always carrying the offending path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A loss or activation became NaN/Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A checkpoint or artifact does not match the configuration it is used with.
class IncompatibleError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

}  // namespace spt
