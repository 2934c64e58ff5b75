#include "gridloop/log.hpp"

#include <cstdlib>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>

namespace gridloop {

spdlog::logger& log() {
    static auto logger = [] {
        auto l = spdlog::stderr_color_mt("gridloop");
        l->set_pattern("[%l] %v");
        spdlog::level::level_enum level = spdlog::level::info;
        if (const char* env = std::getenv("GRIDLOOP_LOG")) {
            const std::string v(env);
            if (v == "error") level = spdlog::level::err;
            else if (v == "debug") level = spdlog::level::debug;
        }
        l->set_level(level);
        return l;
    }();
    return *logger;
}

}  // namespace gridloop
