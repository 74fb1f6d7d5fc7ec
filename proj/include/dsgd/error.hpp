#pragma once

#include <stdexcept>
#include <string>

namespace dsgd {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input files or degenerate geometry read from them.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent network or run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace dsgd
