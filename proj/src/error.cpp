#include "clozebias/error.hpp"

namespace clozebias {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Format: return "format error";
    case ErrorKind::Validation: return "validation error";
    case ErrorKind::MissingScore: return "missing score";
    case ErrorKind::InvalidSpan: return "invalid span";
    case ErrorKind::Mode: return "mode error";
    case ErrorKind::Precondition: return "precondition error";
    case ErrorKind::Oov: return "out-of-vocabulary error";
    case ErrorKind::Transport: return "transport error";
    case ErrorKind::Degenerate: return "degenerate input";
  }
  return "error";
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Transport: return 2;
    case ErrorKind::Degenerate: return 3;
    default: return 1;
  }
}

}  // namespace clozebias
