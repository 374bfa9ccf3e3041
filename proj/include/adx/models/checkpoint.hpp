#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "adx/models/zoo.hpp"

namespace adx::models {

// "BNNM", u32 version, u64 JSON byte length, UTF-8 JSON metadata, u32 tensor
// count, then per tensor: u32 name length, name bytes, TNSR block.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  ModelSpec spec;
  std::vector<std::string> class_names;
  std::uint64_t seed = 0;
  /// Free-form provenance: training config, split, resampling flag.
  nlohmann::json extra = nlohmann::json::object();
};

struct LoadedModel {
  std::unique_ptr<nn::Model> model;
  CheckpointMeta meta;
};

void write_checkpoint(std::ostream& os, nn::Model& model, const CheckpointMeta& meta);
LoadedModel read_checkpoint(std::istream& is);
void save_checkpoint(const std::filesystem::path& path, nn::Model& model, const CheckpointMeta& meta);
LoadedModel load_checkpoint(const std::filesystem::path& path);

}  // namespace adx::models
