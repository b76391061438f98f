// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <spdlog/spdlog.h>

namespace rubricjudge::detail {

/// Library logger; writes to standard error so stdout stays free for data.
spdlog::logger& log();

}  // namespace rubricjudge::detail
