#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace mde {

inline constexpr const char* kVersionString = "mde 0.1.0";

// Reproducibility record written next to every command's outputs.
struct RunManifest {
    std::string command;
    nlohmann::json resolved_config;
    std::uint64_t seed = 0;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::string started_at;
    std::string finished_at;

    std::uint64_t config_hash() const;
    void write(const std::string& path) const;
};

std::string iso8601_now();

}  // namespace mde
