// SPDX-License-Identifier: Apache-2.0
#include "internal/log.hpp"

#include <spdlog/sinks/stdout_sinks.h>

namespace rubricjudge::detail {

spdlog::logger& log() {
  static std::shared_ptr<spdlog::logger> logger = [] {
    auto existing = spdlog::get("rubricjudge");
    if (existing) return existing;
    auto l = spdlog::stderr_logger_mt("rubricjudge");
    l->set_pattern("[%Y-%m-%dT%H:%M:%S.%e] [%l] %v");
    return l;
  }();
  return *logger;
}

}  // namespace rubricjudge::detail
