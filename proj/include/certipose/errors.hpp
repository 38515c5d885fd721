#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace certipose {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed text or binary input. Carries the offending line when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line = 0)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

/// Well-formed input whose contents violate a domain invariant.
class InvariantError : public Error {
 public:
  using Error::Error;
};

class InsufficientCorrespondencesError : public Error {
 public:
  using Error::Error;
};

/// Too few points survived occlusion; callers may resample the view.
class DegenerateViewError : public Error {
 public:
  using Error::Error;
};

class TrainingStalledError : public Error {
 public:
  using Error::Error;
};

/// The corrector produced a non-finite objective.
class SolverDivergedError : public Error {
 public:
  SolverDivergedError(const std::string& what, std::vector<double> trace)
      : Error(what), trace_(std::move(trace)) {}
  const std::vector<double>& trace() const noexcept { return trace_; }

 private:
  std::vector<double> trace_;
};

}  // namespace certipose
