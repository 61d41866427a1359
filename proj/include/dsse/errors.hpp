#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace dsse {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Bad input data: malformed files, unknown keys, out-of-range parameters.
struct ConfigError : Error {
  using Error::Error;
};

struct TopologyError : Error {
  using Error::Error;
};

struct DegenerateNetworkError : Error {
  using Error::Error;
};

struct PowerFlowDiverged : Error {
  PowerFlowDiverged(const std::string& what, double residual)
      : Error(what), last_residual(residual) {}
  double last_residual;
};

struct EmptyMaskError : Error {
  using Error::Error;
};

struct DimensionError : Error {
  using Error::Error;
};

/// Raised by the factorized solvers; carries the objective trace up to the failure.
struct SolverError : Error {
  SolverError(const std::string& what, std::vector<double> trace)
      : Error(what), objective_trace(std::move(trace)) {}
  std::vector<double> objective_trace;
};

}  // namespace dsse
