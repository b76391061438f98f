// SPDX-License-Identifier: Apache-2.0
#include "rubricjudge/error.hpp"

namespace rubricjudge {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Parse: return "ParseFailure";
    case ErrorCode::Range: return "RangeFailure";
    case ErrorCode::MissingFixture: return "MissingFixture";
    case ErrorCode::Transient: return "Transient";
    case ErrorCode::Permanent: return "Permanent";
    case ErrorCode::Exhausted: return "Exhausted";
    case ErrorCode::NonInformative: return "NonInformative";
    case ErrorCode::NonApplicable: return "NonApplicable";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::Undefined: return "Undefined";
    case ErrorCode::PartialBundle: return "PartialBundle";
    case ErrorCode::Divergence: return "Divergence";
    case ErrorCode::Data: return "Data";
  }
  return "Unknown";
}

}  // namespace rubricjudge
