// SPDX-License-Identifier: Apache-2.0
//
// Full-grid probability maps stitched from per-patch predictions.
//
// Export directory:
//   proba.f32     stitched probabilities, row-major [n_lat, n_lon], f32 LE;
//                 sea cells and scores below mask_below are written as 0
//   proba.json    header: shape, t, h, mask_below, counts, file names
//   proba.ppm     gray rendering over [0, 1], masked cells dark blue
//   target.f32    binary target at t + h, when the cube has one
//   target.ppm    its rendering with the same sea mask
#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "televit/datacube.hpp"
#include "televit/model.hpp"

namespace televit {

struct PatchProbability {
  std::size_t patch_index = 0;  // row-major within the fine grid
  std::vector<double> proba;    // [patch * patch], row-major
};

struct PredictionMap {
  std::size_t n_lat = 0, n_lon = 0;
  std::size_t t = 0, h = 0;
  double mask_below = 0.0;
  std::vector<double> proba;   // masked cells hold 0
  std::vector<bool> valid;     // land and proba >= mask_below
  std::vector<double> target;  // empty when the cube has no target
  std::vector<bool> land;
};

/// Places every patch of the grid; throws DataError listing absent patch
/// indices, ContractError on duplicates or wrong patch sizes.
PredictionMap stitch_prediction(const DataCube& fine, std::size_t patch, const std::vector<PatchProbability>& patches,
                                std::size_t t, std::size_t h, double mask_below);

/// Runs the model on every patch at timestep t and stitches the result.
PredictionMap predict_map(const TeleViTModel& model, const DataCube& fine, const DataCube& coarse, std::size_t t,
                          std::size_t h, std::size_t patch, double mask_below);

nlohmann::json prediction_header(const PredictionMap& map);
void export_prediction_map(const PredictionMap& map, const std::filesystem::path& dir);
/// Reads proba.f32 through its header.
std::vector<double> read_prediction_scores(const std::filesystem::path& dir);

}  // namespace televit
