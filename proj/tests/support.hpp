#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "gridloop/netmodel.hpp"

namespace testing {

inline std::string source_path(const std::string& rel) { return std::string(GRIDLOOP_SOURCE_DIR) + "/" + rel; }

inline const gridloop::GridCase& case30() {
    static const gridloop::GridCase grid = gridloop::load_case_file(source_path("data/case30.m"));
    return grid;
}

inline gridloop::GridCase case2() { return gridloop::load_case_file(source_path("data/case2.m")); }

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("gridloop_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testing
