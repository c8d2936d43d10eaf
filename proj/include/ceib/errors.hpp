#ifndef CEIB_ERRORS_HPP_
#define CEIB_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace ceib {

// Invalid configuration or malformed input files. CLI maps this to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure (divergent training, NaN loss). CLI maps this to exit code 2.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace ceib

#endif  // CEIB_ERRORS_HPP_
