#pragma once

#include "elda/config.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace elda {

inline constexpr const char* kToolkitVersion = "0.1.0";

// Record of what produced an output directory: command, resolved
// parameters, seed and file lists. Deliberately free of timestamps so a
// rerun of the same command writes the identical manifest.
struct RunManifest {
    std::string command;
    std::string config_path;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::map<std::string, std::string> params;
    std::uint64_t seed = 0;
    std::string version = kToolkitVersion;
};

inline void write_manifest(const RunManifest& m, const std::filesystem::path& path) {
    nlohmann::json j;
    j["command"] = m.command;
    j["config_path"] = m.config_path;
    j["inputs"] = m.inputs;
    j["outputs"] = m.outputs;
    j["params"] = m.params;
    j["seed"] = m.seed;
    j["version"] = m.version;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("manifest: cannot open " + path.string());
    out << j.dump(2) << "\n";
}

} // namespace elda
