#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace probmatch {

enum class ErrorCode {
  invalid_argument,
  schema,
  no_pairs,
  singular,
  io,
  internal,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Exception carrying a machine-readable code alongside the message.
/// The CLI maps codes onto exit statuses.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace probmatch
