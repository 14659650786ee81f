// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>

#include "televit/tensor.hpp"

namespace televit {

/// One training instance. x_g is shared between all patches of a timestep.
struct Sample {
  Tensor x_l;                  // [C_l, H_l, W_l]
  std::optional<Tensor> x_g;   // [C_g, H_g, W_g]
  std::optional<Tensor> x_i;   // [C_i, T]
  Tensor target;               // [1, H_l, W_l], values in {0, 1}
  std::size_t t = 0;           // input timestep
  std::size_t h = 0;           // horizon in 8-day steps
  std::size_t lat_origin = 0;  // first fine-grid row of the patch
  std::size_t lon_origin = 0;  // first fine-grid column of the patch
  std::size_t patch_index = 0; // row-major patch id within the fine grid
};

}  // namespace televit
