#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "drgaze/model.hpp"

// Checkpoint layout: a plain-text index header followed by a binary section.
//
//   DRGZ-CHECKPOINT 1
//   config <key> <value>        one line per ModelConfig field
//   meta <key> <value>          free-form run metadata (optional)
//   tensor <name> <offset> <shape>
//   ...
//   end
//   <DRGZ tensor records, concatenated in parameters() order>
//
// Offsets count bytes from the first byte after the "end\n" line.

namespace drgaze {

using Metadata = std::vector<std::pair<std::string, std::string>>;

struct CheckpointIndexEntry {
  std::string name;
  std::size_t offset = 0;
  Shape shape;
};

struct CheckpointHeader {
  ModelConfig config;
  Metadata metadata;
  std::vector<CheckpointIndexEntry> tensors;
};

template <Real T>
void save_checkpoint(const std::filesystem::path& path, const DrGazeModel<T>& model,
                     const Metadata& metadata = {});

template <Real T>
DrGazeModel<T> load_checkpoint(const std::filesystem::path& path, Metadata* metadata = nullptr);

CheckpointHeader read_checkpoint_header(const std::filesystem::path& path);

/// "key value" lines for every ModelConfig field, in a fixed order.
std::vector<std::pair<std::string, std::string>> config_entries(const ModelConfig& config);
/// Applies one config entry; false if the key is unknown.
bool apply_config_entry(ModelConfig& config, const std::string& key, const std::string& value);

}  // namespace drgaze
