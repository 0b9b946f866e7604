#pragma once

#include <stdexcept>
#include <string>

namespace contextfed {

/// Raised for contract violations on inputs (bad files, bad configs,
/// precondition failures). Messages are single-line.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An invalid experiment or tool configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace contextfed
