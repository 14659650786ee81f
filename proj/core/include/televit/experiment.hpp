// SPDX-License-Identifier: Apache-2.0
//
// One (variant, horizon) experiment: how a raw cube becomes samples and how
// the model is sized for them. Config files are JSON with optional keys:
//
//   preset          "desk" | "full"           model preset before overrides
//   model           partial model config       e.g. {"depth": 2, "dropout": 0}
//   model_seed      integer                    parameter initialization seed
//   train           partial train config       epochs, lr, batch_size, seed, ...
//   split           {"train":[a,b], "val":[a,b], "test":[a,b]}
//   patch           fine patch side in cells
//   coarsen_factor  global-grid block size
//   history_months  index window length
//
// Input shapes are always derived from the cube, so they need not be given.
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "televit/datacube.hpp"
#include "televit/model.hpp"
#include "televit/training.hpp"

namespace televit {

struct ExperimentConfig {
  std::string preset = "desk";
  nlohmann::json model = nlohmann::json::object();
  std::uint64_t model_seed = 0;
  TrainConfig train;
  SplitSpec split;
  std::size_t patch = 16;
  std::size_t coarsen_factor = 4;
  std::size_t history_months = 10;

  /// Throws ConfigError.
  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

struct PreparedData {
  DataCube fine;    // preprocessed full-resolution cube
  DataCube coarse;  // coarsened, then preprocessed with its own statistics
  SampleSets sets;
};

/// Statistics come from the training years of each resolution.
PreparedData prepare_data(const DataCube& raw, const ExperimentConfig& config);

/// Preset plus overrides, with the variant of config.train and input shapes
/// taken from the prepared cubes.
ModelConfig resolve_model_config(const ExperimentConfig& config, const PreparedData& data);

}  // namespace televit
