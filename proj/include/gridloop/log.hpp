#pragma once

#include <spdlog/spdlog.h>

namespace gridloop {

/// Shared stderr logger; level taken from GRIDLOOP_LOG (error|info|debug, default info).
spdlog::logger& log();

}  // namespace gridloop
