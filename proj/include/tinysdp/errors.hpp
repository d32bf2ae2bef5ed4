#pragma once

#include <stdexcept>
#include <string>

namespace tinysdp {

/// Offline fixed-point iteration failed to reach tolerance.
struct NonConvergenceError : std::runtime_error {
  explicit NonConvergenceError(const std::string& what) : std::runtime_error(what) {}
};

/// An iterate left the representable range (bad penalty weights or data).
struct NonFiniteError : std::runtime_error {
  explicit NonFiniteError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tinysdp
