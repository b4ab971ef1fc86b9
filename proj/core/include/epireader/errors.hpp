#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace epi {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Tensor shapes do not line up for the requested operation.
struct DimensionError : Error {
  using Error::Error;
};

// Structurally valid input that the operation cannot act on
// (empty sequence, fully masked softmax, zero or duplicate placeholder...).
struct DegenerateInputError : Error {
  using Error::Error;
};

// A NaN/Inf was produced, or a gradient oracle turned out invalid.
struct NumericError : Error {
  using Error::Error;
};

// Bad hyperparameter or flag combination.
struct ConfigError : Error {
  using Error::Error;
};

// Token id outside the vocabulary.
struct VocabError : Error {
  using Error::Error;
};

// Corpus file violates the expected layout. `line` is 1-based.
struct ParseError : Error {
  enum class Code {
    MissingLineNumber,
    MissingPlaceholder,
    AnswerNotInCandidates,
    BadCandidateCount,
    AnswerNotEntity,
    BadEntityMapping,
    MissingSeparator,
    Truncated,
  };

  ParseError(Code code, std::size_t line, const std::string& what)
      : Error("parse error at line " + std::to_string(line) + ": " + what),
        code(code),
        line(line) {}

  Code code;
  std::size_t line;
};

// Checkpoint file rejected (bad magic, version, vocab hash, truncation...).
struct CheckpointError : Error {
  using Error::Error;
};

}  // namespace epi
