#pragma once

#include <stdexcept>
#include <string>

namespace spi {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed instance/policy document.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Well-formed input that violates a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A computation left its numerically safe regime (pivot failure, non-recurrent chain).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A benchmark solution and a w-rule that do not produce valid sale probabilities.
class IncompatiblePairingError : public Error {
 public:
  IncompatiblePairingError(const std::string& what, int good, int buyer)
      : Error(what), good_(good), buyer_(buyer) {}

  int good() const noexcept { return good_; }
  int buyer() const noexcept { return buyer_; }

 private:
  int good_;
  int buyer_;
};

/// Sale probabilities that do not have the threshold shape of a posted price.
class NotPostedPriceError : public Error {
 public:
  using Error::Error;
};

}  // namespace spi
