#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

// Command implementations behind the elda tool. Each returns a process
// exit code: 0 success, 2 configuration/usage error, 3 numeric failure,
// 4 property-suite failure.

namespace elda::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitSuite = 4;

struct SimulateOptions {
    std::string config_path;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    int jobs = 1;
    bool png = false;
};

struct ReconstructOptions {
    std::string config_path;
    std::string method = "elda"; // fbp | elda | plain_gd
    std::string input;           // sinogram tensor path
    std::string filters;         // preset name or .fb path; empty: from config
    std::string out_dir = "out";
    bool png = false;
};

struct EvaluateOptions {
    std::vector<std::string> recon_paths;
    std::string reference;
    std::string out_csv; // empty: stdout
};

struct VerifyOptions {
    std::string suite; // adjoint | gradients | descent | smoothing | noise
};

struct ConfigCmdOptions {
    std::string config_path;
    bool dump_defaults = false;
    std::string inspect_filters;
};

int cmd_simulate(const SimulateOptions& opts);
int cmd_reconstruct(const ReconstructOptions& opts);
int cmd_evaluate(const EvaluateOptions& opts);
int cmd_verify(const VerifyOptions& opts);
int cmd_config(const ConfigCmdOptions& opts);

} // namespace elda::cli
