#pragma once

#include <stdexcept>
#include <string>

namespace dycp {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Embedding width disagrees with the store or the query.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Input data failed validation (dataset schema, gold turns, turn indices,
/// non-finite vectors handed to the store).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Cache file is not in the expected format (magic, version).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Cache file header and payload disagree.
class CorruptionError : public Error {
 public:
  using Error::Error;
};

/// Embedding provider returned something that violates its contract.
class ProviderError : public Error {
 public:
  using Error::Error;
};

/// Embedding provider could not be reached after retries.
class TransportError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace dycp
