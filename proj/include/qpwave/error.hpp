#ifndef QPWAVE_ERROR_HPP
#define QPWAVE_ERROR_HPP

#include <stdexcept>
#include <string>

namespace qpwave {

enum class ErrorKind {
  Parse,
  Validation,
  BoxTooSmall,
  Resonant,
  QuadratureIll,
  SeriesDiverging,
  NoEigenvalueInWindow,
  MultipleInWindow,
  NeighborhoodExit,
  NoConvergence,
  NoRootInInterval,
  BoundViolation,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Parse: return "ParseError";
    case ErrorKind::Validation: return "ValidationError";
    case ErrorKind::BoxTooSmall: return "BoxTooSmall";
    case ErrorKind::Resonant: return "Resonant";
    case ErrorKind::QuadratureIll: return "QuadratureIll";
    case ErrorKind::SeriesDiverging: return "SeriesDiverging";
    case ErrorKind::NoEigenvalueInWindow: return "NoEigenvalueInWindow";
    case ErrorKind::MultipleInWindow: return "MultipleInWindow";
    case ErrorKind::NeighborhoodExit: return "NeighborhoodExit";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::NoRootInInterval: return "NoRootInInterval";
    case ErrorKind::BoundViolation: return "BoundViolation";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Process exit status used by the command line tool for each error family.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Parse:
    case ErrorKind::Validation:
    case ErrorKind::BoxTooSmall:
      return 2;
    case ErrorKind::Resonant:
    case ErrorKind::QuadratureIll:
    case ErrorKind::NoEigenvalueInWindow:
    case ErrorKind::MultipleInWindow:
    case ErrorKind::NeighborhoodExit:
      return 3;
    case ErrorKind::NoConvergence:
    case ErrorKind::SeriesDiverging:
    case ErrorKind::NoRootInInterval:
      return 4;
    case ErrorKind::BoundViolation:
      return 5;
  }
  return 1;
}

}  // namespace qpwave

#endif  // QPWAVE_ERROR_HPP
