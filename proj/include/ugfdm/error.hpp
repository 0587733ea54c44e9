#pragma once

#include <stdexcept>
#include <string>

namespace ugfdm {

// Broad failure classes; the CLI maps them onto exit codes.
enum class ErrorCategory {
  Config,    // invalid input or setup (geometry, stencils, boundary specs)
  Solver,    // nonlinear/linear solve failure, time-step collapse
  Io,        // file read/write problems
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

inline Error config_error(const std::string& what) { return Error(ErrorCategory::Config, what); }
inline Error solver_error(const std::string& what) { return Error(ErrorCategory::Solver, what); }
inline Error io_error(const std::string& what) { return Error(ErrorCategory::Io, what); }

inline int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Config: return 2;
    case ErrorCategory::Solver: return 3;
    case ErrorCategory::Io: return 4;
  }
  return 1;
}

inline const char* category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Config: return "config";
    case ErrorCategory::Solver: return "solver";
    case ErrorCategory::Io: return "io";
  }
  return "unknown";
}

}  // namespace ugfdm
