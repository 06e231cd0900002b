#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mirage {

// Base class for every error thrown by this library.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// A vector or string-vector does not have the dimension an operation requires.
struct DimensionMismatch : Error {
  using Error::Error;
};

// A rule configuration violates the grammar (bad indices, bad parameters,
// or a configuration that would act as the identity).
struct InvalidRule : Error {
  using Error::Error;
};

// A string component contains characters outside the a..j alphabet.
struct InvalidAlphabet : Error {
  using Error::Error;
};

// Rejection sampling hit its attempt cap, or a constraint is infeasible.
struct GenerationExhausted : Error {
  using Error::Error;
};

// A prompt template cannot host the requested configuration (e.g. dimension
// exceeds the letter or noun capacity of the template).
struct TemplateMismatch : Error {
  using Error::Error;
};

// A cross-scenario combination that has no defined rendering.
struct UnsupportedTransfer : Error {
  using Error::Error;
};

// Text could not be parsed; carries the byte offset where parsing failed.
struct ParseError : Error {
  ParseError(const std::string& what, std::size_t position)
      : Error(what + " (at offset " + std::to_string(position) + ")"),
        position(position) {}
  explicit ParseError(const std::string& what) : Error(what), position(0) {}
  std::size_t position;
};

// A response does not contain the expected answer stanza at all.
struct FormatError : Error {
  using Error::Error;
};

// A parsed stanza has the wrong number of slots for the task dimension.
struct ArityError : Error {
  using Error::Error;
};

// A stored record violates the file schema; carries the 1-based line number.
struct SchemaError : Error {
  SchemaError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line(line) {}
  explicit SchemaError(const std::string& what) : Error(what), line(0) {}
  std::size_t line;
};

// A remote request failed after exhausting the retry budget.
struct TransportError : Error {
  using Error::Error;
};

// A cache entry exists but cannot be read back consistently.
struct CacheCorruption : Error {
  using Error::Error;
};

// A proposer could not produce a candidate; refinement loops propagate this
// together with the partial trace accumulated so far.
struct ProposerFailure : Error {
  using Error::Error;
};

// An experiment configuration failed validation.
struct ConfigError : Error {
  using Error::Error;
};

// An aggregate was requested over an empty collection.
struct EmptyInput : Error {
  using Error::Error;
};

// change_rate is undefined when the baseline accuracy is zero.
struct UndefinedCR : Error {
  using Error::Error;
};

// deductive density is undefined when no task has a correct origin answer.
struct UndefinedDensity : Error {
  using Error::Error;
};

}  // namespace mirage
