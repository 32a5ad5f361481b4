#pragma once

#include <stdexcept>
#include <string>

namespace ntks {

enum class ErrorKind {
  InvalidInput,
  DegenerateInput,
  DegenerateEnergy,
  DegenerateKernel,
  InvalidStepSize,
  DivergenceDetected,
  ParseError,
  UnsupportedShape,
  InvalidConfig,
  IoError,
};

const char* to_string(ErrorKind kind);

// Every failure raised by the library carries one of the kinds above so the
// CLI can report it per row without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace ntks
