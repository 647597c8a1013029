#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace silenzio {

/// Base of every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A raw arithmetic result left the 8-bit range of its value kind. Signals an
/// illegal circuit; values never wrap.
class GuardViolation : public Error {
 public:
  GuardViolation(std::string gadget, std::int64_t value)
      : Error("guard violation in '" + gadget + "': value " + std::to_string(value) +
              " does not fit 8 bits"),
        gadget_(std::move(gadget)),
        value_(value) {}

  const std::string& gadget() const noexcept { return gadget_; }
  std::int64_t value() const noexcept { return value_; }

 private:
  std::string gadget_;
  std::int64_t value_;
};

/// Lookup input outside the table's declared domain, or a malformed table/base.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// No catalog RNS base is wide enough.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Integer not representable in the signed ring of a base.
class RangeError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class EmptySplit : public Error {
 public:
  using Error::Error;
};

/// No usable feature column is left after dropping constant ones.
class DegenerateFeature : public Error {
 public:
  using Error::Error;
};

}  // namespace silenzio
