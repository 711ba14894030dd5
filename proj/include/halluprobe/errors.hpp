#pragma once

#include <stdexcept>
#include <string>

namespace halluprobe {

/// Base class for all toolkit errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Bad user input: malformed files, infeasible parameters, missing paths.
/// CLI exit code 4.
struct ConfigError : Error {
  using Error::Error;
};

/// Translation backend failure: missing manifest entry, dead child process.
/// CLI exit code 3.
struct BackendError : Error {
  using Error::Error;
};

/// Violated data contract: non-stochastic attention rows, inconsistent
/// annotations, broken overlap guarantees. CLI exit code 2.
struct InvariantError : Error {
  using Error::Error;
};

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int invariant_violation = 2;
inline constexpr int backend_failure = 3;
inline constexpr int config_error = 4;
}  // namespace exit_code

}  // namespace halluprobe
