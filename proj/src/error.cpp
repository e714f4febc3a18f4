#include "probmatch/error.hpp"

namespace probmatch {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument:
      return "invalid_argument";
    case ErrorCode::schema:
      return "schema";
    case ErrorCode::no_pairs:
      return "no_pairs";
    case ErrorCode::singular:
      return "singular";
    case ErrorCode::io:
      return "io";
    case ErrorCode::internal:
      return "internal";
  }
  return "internal";
}

}  // namespace probmatch
