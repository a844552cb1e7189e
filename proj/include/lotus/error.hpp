#pragma once

#include <stdexcept>
#include <string>

namespace lotus {

// Single exception type for every recoverable failure in the toolkit. The
// message is meant for the end user, so it names the offending input.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace lotus
