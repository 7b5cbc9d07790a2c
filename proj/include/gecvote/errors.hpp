#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gecvote {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// text / edit application
struct BoundsError : Error {
  using Error::Error;
};
struct OverlapError : Error {
  using Error::Error;
};

// M2 parsing; `line` is 1-based
struct FormatError : Error {
  std::size_t line;
  FormatError(std::size_t line_no, const std::string& msg)
      : Error("line " + std::to_string(line_no) + ": " + msg), line(line_no) {}
};
struct SpanError : Error {
  std::size_t line;
  SpanError(std::size_t line_no, const std::string& msg)
      : Error("line " + std::to_string(line_no) + ": " + msg), line(line_no) {}
};

// file IO
struct IoError : Error {
  using Error::Error;
};

// voting / scoring
struct MismatchError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct LengthMismatchError : Error {
  using Error::Error;
};
struct EmptyCandidatesError : Error {
  using Error::Error;
};
struct EmptyReferenceError : Error {
  using Error::Error;
};
struct InsufficientCandidatesError : Error {
  using Error::Error;
};

// generation
struct TemplateError : Error {
  using Error::Error;
};
struct InsufficientDataError : Error {
  using Error::Error;
};
struct AuthError : Error {
  using Error::Error;
};
struct EndpointError : Error {
  std::size_t failed_index;
  EndpointError(std::size_t index, const std::string& msg)
      : Error(msg), failed_index(index) {}
};

}  // namespace gecvote
