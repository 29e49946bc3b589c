#pragma once

#include <stdexcept>
#include <string>

namespace dtwmatch {

/// Bad user configuration (CLI exit code 2).
class config_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// The working set of a fragment does not fit the configured memory budget.
class memory_budget_error : public config_error {
public:
  using config_error::config_error;
};

/// Reduction transport failed: timeout, broken connection, malformed frame (exit code 3).
class transport_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace dtwmatch
