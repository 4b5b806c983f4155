#pragma once

#include <stdexcept>
#include <string>

namespace itogen {

// Invalid user-supplied parameters or configuration fields.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or inconsistent input data (files, shapes, off-grid times).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A simulation, forward pass or training run produced non-finite values.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A statistical estimator was asked for a value outside its domain.
class EstimationDomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace itogen
