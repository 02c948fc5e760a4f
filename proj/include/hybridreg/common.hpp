#pragma once

#include <stdexcept>
#include <string>

namespace hybridreg {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegeneracyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InsufficientDataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Global-stage failure: no homography with enough inliers.
struct RansacFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Deformable-stage failure: a loss term went non-finite.
struct DivergenceError : std::runtime_error {
  DivergenceError(const std::string& term, const std::string& msg)
      : std::runtime_error(msg), term(term) {}
  std::string term;
};

}  // namespace hybridreg
