// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint file layout (all integers little-endian):
//
//   bytes 0..7    magic "TVITCKPT"
//   bytes 8..15   u64 header length N
//   next N bytes  UTF-8 JSON header
//   remainder     f64 parameter values, little-endian, concatenated in
//                 TeleViTModel::parameters() order (also listed in the header)
//
// Header keys: format_version, model_config, seed, epoch, metrics,
// parameters [{name, shape}], blob_bytes, plus caller-supplied extras.
#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>

#include "televit/model.hpp"

namespace televit {

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

struct CheckpointHeader {
  std::size_t epoch = 0;
  nlohmann::json metrics = nlohmann::json::object();
  nlohmann::json extra = nlohmann::json::object();  // merged into the header verbatim
};

void save_checkpoint(const std::filesystem::path& path, const TeleViTModel& model,
                     const CheckpointHeader& header);

struct LoadedCheckpoint {
  TeleViTModel model;
  nlohmann::json header;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace televit
