#pragma once

#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "isoopt/harness.hpp"

namespace isoopt::cli {

enum ExitCode : int { kOk = 0, kPropertyFailure = 1, kConfigError = 2, kIoError = 3 };

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Parses `key = value` lines; '#' starts a comment. Keys are normalized to
/// lower case with '-' mapped to '_'.
std::map<std::string, std::string> parse_key_values(std::istream& in);

/// Applies one setting by its config-file key (e.g. "lr_min", "optimizer").
void apply_setting(SweepConfig& config, const std::string& key, const std::string& value);

/// Builds a sweep configuration from a preset name, then config-file
/// settings, then flag settings, each layer overriding the previous one.
SweepConfig resolve_sweep_config(const std::string& preset,
                                 const std::map<std::string, std::string>& file_settings,
                                 const std::vector<std::pair<std::string, std::string>>& flag_settings);

SweepConfig preset_by_name(const std::string& name);

/// Worker count: explicit value, else ISO_OPT_WORKERS, else hardware threads.
std::size_t default_workers();

/// Full command-line entry point. argv[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace isoopt::cli
