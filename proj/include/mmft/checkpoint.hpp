#pragma once

#include "mmft/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>

namespace mmft {

/// A checkpoint is `<stem>.json` (config, vocabulary, parameter table with
/// shapes and byte offsets, seed, step) plus `<stem>.bin`, the parameter
/// values as one flat little-endian float64 blob in table order.
struct CheckpointMeta {
  std::uint64_t step = 0;
  int epoch = 0;
  nlohmann::json extra = nlohmann::json::object();
};

void save_checkpoint(const std::filesystem::path& stem, const MmftBert& model, const CheckpointMeta& meta = {});

struct LoadedCheckpoint {
  std::unique_ptr<MmftBert> model;
  CheckpointMeta meta;
  nlohmann::json manifest;
};

/// Accepts the stem, the .json manifest or the .bin blob path.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

std::filesystem::path checkpoint_manifest_path(const std::filesystem::path& path);

}  // namespace mmft
