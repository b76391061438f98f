// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rubricjudge {

/// Failure categories shared by every module. The C API maps each one onto a
/// status code, and the CLI maps those onto process exit codes.
enum class ErrorCode {
  InvalidArgument,
  Io,
  Parse,          // judge output without a usable Score line
  Range,          // score outside the rubric bounds
  MissingFixture,
  Transient,      // timeouts, 5xx, connection resets
  Permanent,      // 4xx and other non-retryable responses
  Exhausted,      // retries used up; message carries the last cause
  NonInformative,
  NonApplicable,
  OutOfRange,     // corruption would push a score out of bounds
  Undefined,      // statistic undefined (zero variance, no qualifying items)
  PartialBundle,
  Divergence,
  Data,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace rubricjudge
