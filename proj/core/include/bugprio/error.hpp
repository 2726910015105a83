#pragma once

#include <stdexcept>
#include <string>

namespace bugprio {

/// Broad failure classes; the CLI maps each onto an exit code.
enum class ErrorKind {
  kInvalidArgument,  // precondition violated by the caller
  kInput,            // unreadable or unusable input data
  kConfig,           // missing or inconsistent configuration
  kIntegrity,        // artifact hashes do not line up
  kProtocol,         // external worker misbehaved
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid_argument";
    case ErrorKind::kInput: return "input";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kIntegrity: return "integrity";
    case ErrorKind::kProtocol: return "protocol";
  }
  return "unknown";
}

}  // namespace bugprio
