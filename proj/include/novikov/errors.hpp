#pragma once

#include <stdexcept>
#include <string>

namespace novikov {

// Bad user input: config keys, family parameters, grid bounds.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Caller broke a documented precondition (length mismatch, order out of range).
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// Non-finite intermediates, Newton failure, guard violations.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// State outside the admissible set (negative kernel integrand and the like).
struct StateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct QueryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Reconstruction asked for a quantity that is undefined on masked nodes.
struct PartialResultError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PathError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace novikov
