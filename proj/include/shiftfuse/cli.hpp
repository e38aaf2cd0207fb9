#pragma once

// Command-line front end: estimate | simulate | diagnose, each driven by a
// JSON config with optional --seed / --out overrides.

#include <cstdint>
#include <optional>
#include <string>

namespace shiftfuse {

struct CliOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
};

// Run one subcommand against a config file. Returns the process exit code;
// on failure a machine-readable error JSON is printed to stderr and any
// partially written outputs are removed.
int cmd_estimate(const std::string& config_path, const CliOverrides& ov = {});
int cmd_simulate(const std::string& config_path, const CliOverrides& ov = {});
int cmd_diagnose(const std::string& config_path, const CliOverrides& ov = {});

int cli_main(int argc, char** argv);

}  // namespace shiftfuse
