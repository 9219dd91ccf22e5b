#include "mde/io/manifest.hpp"

#include <chrono>
#include <ctime>
#include <fstream>

#include "mde/core/errors.hpp"

namespace mde {

std::uint64_t RunManifest::config_hash() const {
    const std::string dump = resolved_config.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : dump) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

void RunManifest::write(const std::string& path) const {
    nlohmann::json j;
    j["command"] = command;
    j["config"] = resolved_config;
    j["config_hash"] = config_hash();
    j["seed"] = seed;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["started_at"] = started_at;
    j["finished_at"] = finished_at;
    j["version"] = kVersionString;
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write manifest: " + path);
    out << j.dump(2) << "\n";
}

std::string iso8601_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t tt = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace mde
