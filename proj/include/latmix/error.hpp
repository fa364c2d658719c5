#pragma once

#include <stdexcept>
#include <string>

namespace latmix {

/// Raised for invalid input: malformed specs, inconsistent data, bad arguments.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace latmix
