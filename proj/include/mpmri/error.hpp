#pragma once

#include <stdexcept>
#include <string>

namespace mpmri {

// Bad input, malformed file or config. The CLI maps this to exit code 2.
class InputError : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

// Divergence, non-finite values, singular systems. Exit code 3.
class NumericalError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

} // namespace mpmri
