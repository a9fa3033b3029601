#pragma once

#include <memory>

#include <spdlog/logger.h>

namespace sacloc {

// Shared stderr logger named "sacloc". Level comes from SACLOC_LOG
// (spdlog syntax, e.g. "debug" or "off"); defaults to "info".
spdlog::logger& log();

}  // namespace sacloc
