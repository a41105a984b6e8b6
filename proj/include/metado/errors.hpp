#pragma once

#include <stdexcept>
#include <string>

namespace metado {

struct MissingFileError : std::runtime_error {
  explicit MissingFileError(const std::string& path)
      : std::runtime_error("missing file: " + path) {}
};

// Malformed config, suite, or checkpoint content.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BudgetError : std::runtime_error {
  BudgetError() : std::runtime_error("evaluation budget exhausted") {}
};

}  // namespace metado
