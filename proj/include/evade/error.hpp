#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace evade {

enum class ErrorKind {
  InvalidArgument,
  EmptyCorpus,
  EmptyText,
  ZeroTemperature,
  MissingClass,
  TooShort,
  InsufficientMaskable,
  NoSurvivors,
  NoWords,
  EmptyQuery,
  EmptyBatch,
  Timeout,
  Network,
  ProtocolError,
  HttpStatus,
  Io,
  Config,
};

std::string_view to_string(ErrorKind kind);

/// Base exception for every recoverable failure in the library. The kind
/// lets callers (the CLI in particular) map failures onto exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised by the remote scorer client for non-2xx replies.
class HttpStatusError : public Error {
 public:
  HttpStatusError(int status, const std::string& message)
      : Error(ErrorKind::HttpStatus, message), status_(status) {}

  int status() const noexcept { return status_; }

 private:
  int status_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace evade
