#pragma once

#include <stdexcept>
#include <string>

namespace spdecomp {

// Process exit-code contract shared by the CLI and the error taxonomy:
// 0 success, 2 usage, 3 data error, 4 numerical failure, 5 version/integrity.
enum class ExitCode : int {
  ok = 0,
  usage = 2,
  data = 3,
  numeric = 4,
  integrity = 5,
};

// Malformed or inconsistent input: files, dimensions, duplicate locations,
// degenerate geometry.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid parameters or a failed numerical routine.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unreadable, truncated, or version-incompatible model/data containers.
class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline ExitCode exit_code_for(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e)) return ExitCode::usage;
  if (dynamic_cast<const DataError*>(&e)) return ExitCode::data;
  if (dynamic_cast<const IntegrityError*>(&e)) return ExitCode::integrity;
  if (dynamic_cast<const NumericError*>(&e)) return ExitCode::numeric;
  return ExitCode::numeric;
}

}  // namespace spdecomp
