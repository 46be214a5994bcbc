#pragma once

#include <stdexcept>
#include <string>

namespace clozebias {

enum class ErrorKind {
  Format,        // malformed input file
  Validation,    // well-formed but violates a schema or corpus rule
  MissingScore,  // logprob store has no record for a sentence
  InvalidSpan,   // pronoun span cannot be scored
  Mode,          // scoring mode incompatible with the instance
  Precondition,  // caller violated an operation precondition
  Oov,           // no word resolved in the embedding table
  Transport,     // HTTP provider failure
  Degenerate,    // empty or numerically degenerate input
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// CLI exit status: 1 validation, 2 transport, 3 degenerate input.
int exit_code_for(ErrorKind kind);

}  // namespace clozebias
