#include "sacloc/log.hpp"

#include <cstdlib>

#include <spdlog/cfg/helpers.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace sacloc {

spdlog::logger& log() {
  static std::shared_ptr<spdlog::logger> instance = [] {
    auto logger = spdlog::get("sacloc");
    if (!logger) logger = spdlog::stderr_color_mt("sacloc");
    logger->set_pattern("[%l] %v");
    logger->set_level(spdlog::level::info);
    if (const char* env = std::getenv("SACLOC_LOG"); env != nullptr && *env != '\0') {
      spdlog::cfg::helpers::load_levels(env);
    }
    return logger;
  }();
  return *instance;
}

}  // namespace sacloc
