#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace quadgen {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid schema configuration or a value that violates the schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Malformed input data (dataset files, vocab files, checkpoints).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A linearized sequence that does not follow the quadruple grammar.
class ParseError : public Error {
 public:
  ParseError(std::size_t token_index, const std::string& what)
      : Error("token " + std::to_string(token_index) + ": " + what), token_index_(token_index) {}

  /// Index of the earliest offending token (equal to the sequence length when input ended early).
  std::size_t token_index() const noexcept { return token_index_; }

 private:
  std::size_t token_index_;
};

/// Misconfigured decoder or a token the grammar does not allow.
class DecodeError : public Error {
 public:
  using Error::Error;
};

/// A non-finite intermediate value; the message names the layer.
class NumericError : public Error {
 public:
  NumericError(const std::string& layer, const std::string& what)
      : Error(layer + ": " + what), layer_(layer) {}

  const std::string& layer() const noexcept { return layer_; }

 private:
  std::string layer_;
};

}  // namespace quadgen
