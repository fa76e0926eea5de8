#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dhs {

enum class ErrorKind {
  DimensionMismatch,
  NotContractive,
  NotStabilizable,
  NoConvergence,
  SequenceTooShort,
  InvalidTopology,
  SingularDiscretization,
  Infeasible,
  AssumptionViolated,
  HistoryTooShort,
  RankDeficient,
  IllConditioned,
  SingularBlock,
  DestabilizingUpdate,
  IterationCapExceeded,
  HorizonExhausted,
  Diverged,
  ZeroReference,
  ParseError,
  ValidationFailed,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library. The kind lets callers branch
/// (e.g. the learner extends data collection on RankDeficient, the CLI maps
/// Diverged to its own exit code) without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// RankDeficient carries the observed rank so callers can report it.
class RankDeficientError : public Error {
 public:
  RankDeficientError(long observed, long required, const std::string& what)
      : Error(ErrorKind::RankDeficient,
              what + " (rank " + std::to_string(observed) + " of " +
                  std::to_string(required) + ")"),
        observed_(observed),
        required_(required) {}

  long observed_rank() const noexcept { return observed_; }
  long required_rank() const noexcept { return required_; }

 private:
  long observed_;
  long required_;
};

}  // namespace dhs
