#pragma once

#include <stdexcept>
#include <string>

namespace mfhg {

// Malformed file contents: bad magic, truncation, shape mismatch.
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Filesystem-level failures: unreadable or unwritable paths.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values encountered where the computation cannot continue.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mfhg
