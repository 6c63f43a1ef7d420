#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qcn {

enum class ErrorKind {
  kAmbiguousTarget,
  kNoDirections,
  kModeMismatch,
  kDegenerateEdge,
  kUnreachableBranch,
  kDuplicateAssignment,
  kUnknownCell,
  kInvalidGraph,
  kInvalidSite,
  kInvalidConfig,
  kEmptyTrace,
  kSyntaxError,
  kValidationFailed,
  kHashMismatch,
  kNoSnapshots,
  kInvalidArgument,
};

std::string_view to_string(ErrorKind kind);

// Every failure raised by the library carries a kind so callers (and the CLI)
// can map it without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace qcn
