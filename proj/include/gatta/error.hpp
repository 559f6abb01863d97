#pragma once

#include <stdexcept>
#include <string>

namespace gatta {

// Exit-code classes used by the CLI: usage=1, io=2, numeric=3.
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace gatta
