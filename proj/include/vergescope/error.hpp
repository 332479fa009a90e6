#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vergescope {

enum class ErrorCode {
  DegenerateInput,
  Domain,
  RankDeficient,
  SingularDesign,
  Lookup,
  OutOfRange,
  InvalidModel,
  MissingLevel,
  UnknownLevel,
  Nesting,
  UndefinedShare,
  UndefinedCorrelation,
  MissingBaseline,
  Parse,
  Io,
  Usage,
};

std::string_view error_code_name(ErrorCode code) noexcept;

// Every library failure is reported as an Error carrying a machine-readable
// code; the CLI turns it into the JSON error object on stderr.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

}  // namespace vergescope
