#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace adx::cli {

/// Git blob hash: SHA-1 over "blob <size>\0" followed by the content, as
/// lowercase hex. Matches `git hash-object`.
std::string git_blob_sha1(std::string_view content);
/// Throws DataError if the file cannot be read.
std::string git_blob_sha1_file(const std::filesystem::path& path);

struct FileRecord {
  std::string path;
  std::string sha1;
};

/// Record of one command invocation. Replaying re-runs `args` from `cwd`
/// with the recorded output directory and thread count in the environment.
struct RunManifest {
  static constexpr int kFormatVersion = 1;

  std::string command;
  std::vector<std::string> args;  // without the program name
  std::string cwd;
  std::string output_dir;
  std::size_t threads = 1;
  std::uint64_t seed = 0;
  /// Every option value after flags, environment and config file were merged.
  std::string config;
  /// Command-specific resolved settings (model spec, training config, ...).
  nlohmann::json details = nlohmann::json::object();
  std::string started_at;
  std::string finished_at;
  std::vector<FileRecord> inputs;
  std::vector<FileRecord> outputs;
  int exit_code = 0;
  std::string error;

  void add_input(const std::filesystem::path& path);
  /// The hash is taken by finalize_outputs(), after the file is written.
  void add_output(const std::filesystem::path& path);
  /// Hashes every output that exists; missing outputs are dropped.
  void finalize_outputs();

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static RunManifest load(const std::filesystem::path& path);
};

/// Current UTC time as YYYY-MM-DDTHH:MM:SSZ.
std::string utc_timestamp();

}  // namespace adx::cli
