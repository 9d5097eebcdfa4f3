#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace factorjm::cli {

/// Environment variable naming the config file used when --config is absent.
inline constexpr const char* kConfigEnvVar = "FACTORJM_CONFIG";

/// Runs one subcommand. `args` excludes the program name. Returns the exit
/// status: 0 on success, 2 for usage or configuration errors and missing
/// artifacts, 1 for data and numerical failures.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace factorjm::cli
