#pragma once

#include <stdexcept>
#include <string>

namespace aot {

// Base of every error raised by the library. Callers that only need to
// report a failure can catch this one type.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class DomainError : public Error { using Error::Error; };        // params out of bounds, bad inputs
class LookupError : public Error { using Error::Error; };        // unknown template / affordance id
class ParseError : public Error { using Error::Error; };         // malformed text or files
class GeometryError : public Error { using Error::Error; };      // degenerate geometry
class EvaluationError : public Error { using Error::Error; };    // non-finite function values
class RankError : public Error { using Error::Error; };          // degenerate point configurations
class NoMotionError : public Error { using Error::Error; };      // observation pair shows no motion
class NoAffordanceError : public Error { using Error::Error; };  // no feasible grasp
class PlanningError : public Error { using Error::Error; };
class IoError : public Error { using Error::Error; };

class OptimizationError : public Error {
public:
  OptimizationError(const std::string& what, std::string traces)
      : Error(what), traces_(std::move(traces)) {}
  const std::string& traces() const { return traces_; }

private:
  std::string traces_;
};

}  // namespace aot
