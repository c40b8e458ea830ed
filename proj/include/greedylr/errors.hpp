#pragma once

#include <stdexcept>
#include <string>

namespace greedylr {

// Bad input values: dimensions, invalid Laplacians, malformed settings. CLI exit code 2.
struct validation_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Numerical failure inside a solver (non-convergence, loss of definiteness). CLI exit code 3.
struct solver_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A linear system became (near-)singular for the current ALS direction; the sweep
// restarts with a fresh start vector rather than failing the whole solve.
struct degenerate_direction : solver_error {
  using solver_error::solver_error;
};

// File and serialization problems, including checksum mismatches. CLI exit code 4.
struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace greedylr
