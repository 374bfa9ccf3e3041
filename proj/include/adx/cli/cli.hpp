#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace adx::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitDivergence = 3,
};

/// Runs one command. `args` excludes the program name. Every parsed run
/// writes a manifest, including runs that fail after parsing.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// As above, but the manifest goes to `manifest_path` regardless of flags.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const std::optional<std::filesystem::path>& manifest_path);

}  // namespace adx::cli
