#pragma once

#include <stdexcept>
#include <string>

namespace groundkit {

// Base of every error the toolkit raises. The CLI maps each kind onto a
// stable exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Precondition violated by a caller (id out of range, bad layer index, ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Input geometry cannot support the requested rendering.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// On-disk artifact (dump, manifest, PNG) does not match its format.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Missing or invalid configuration detected before any work starts.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Model answer could not be turned into geometry. Keeps the raw text.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::string raw)
      : Error(what), raw_(std::move(raw)) {}
  const std::string& raw() const noexcept { return raw_; }

 private:
  std::string raw_;
};

// Network failure that survived the retry budget.
class TransportError : public Error {
 public:
  using Error::Error;
};

// Server rejected the request with a non-retryable status.
class RequestError : public Error {
 public:
  RequestError(int status, const std::string& what) : Error(what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

}  // namespace groundkit
