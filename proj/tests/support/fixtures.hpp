// SPDX-License-Identifier: Apache-2.0
// Small synthetic datasets shared by the test binaries.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "televit/datacube.hpp"
#include "televit/model.hpp"
#include "televit/grad_check.hpp"
#include "televit/rng.hpp"
#include "televit/training.hpp"

namespace televit::fixtures {

struct TinyData {
  DataCube fine, coarse;
  SplitSpec split;
  SampleSets sets;
  ModelConfig config;
};

/// 16x32 grid, 16-pixel patches, 4x coarsening, one train/val/test year each
/// after a one-year history buffer.
inline TinyData tiny_data(Variant variant, std::uint64_t seed, std::size_t horizon = 1,
                          double teleconnection = 0.0) {
  GeneratorConfig g;
  g.n_lat = 16;
  g.n_lon = 32;
  g.n_years = 4;
  g.patch = 16;
  g.coarsen_factor = 4;
  g.local_strength = 2.5;
  g.teleconnection_strength = teleconnection;
  g.teleconnection_lag_months = 4;
  TinyData d;
  d.split.train = {2002, 2002};
  d.split.val = {2003, 2003};
  d.split.test = {2004, 2004};
  const DataCube raw = generate_synthetic_cube(g, seed);
  d.fine = preprocess(raw, compute_split_stats(raw, d.split));
  const DataCube rc = coarsen(raw, 4);
  d.coarse = preprocess(rc, compute_split_stats(rc, d.split));
  SampleOptions so;
  so.patch = 16;
  d.sets = build_samples(d.fine, d.coarse, horizon, d.split, so);
  d.config = ModelConfig::desk(variant);
  d.config.inputs.global_h = 4;
  d.config.inputs.global_w = 8;
  return d;
}

inline Tensor random_tensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.mutable_data()) v = rng.normal();
  return t;
}

/// Standard-normal inputs of every source a configuration can consume.
inline Sample random_sample(const ModelConfig& c, Rng& rng) {
  Sample s;
  s.x_l = random_tensor({c.inputs.local_channels, c.inputs.local_h, c.inputs.local_w}, rng);
  s.x_g = random_tensor({c.inputs.global_channels, c.inputs.global_h, c.inputs.global_w}, rng);
  s.x_i = random_tensor({c.inputs.n_indices, c.inputs.index_length}, rng);
  s.target = Tensor({1, c.out_h, c.out_w});
  return s;
}

/// Max relative finite-difference error of the desk-scale loss of `variant`
/// over `count` parameter elements drawn uniformly from the whole model.
inline double end_to_end_grad_error(Variant variant, std::uint64_t seed, double step = 3e-4,
                                    std::size_t count = 64) {
  const ModelConfig c = ModelConfig::desk(variant);
  const TeleViTModel model(c, seed);
  Rng rng(Rng::mix(seed, 77));
  Sample s = random_sample(c, rng);
  for (double& v : s.target.mutable_data()) v = rng.bernoulli(0.3) ? 1.0 : 0.0;

  const auto named = model.parameters();
  std::vector<Tensor> params;
  std::size_t total = 0;
  for (const auto& p : named) {
    params.push_back(p.tensor);
    total += p.tensor.numel();
  }
  std::vector<ParamElement> elements;
  for (std::size_t k = 0; k < count; ++k) {
    std::size_t flat = rng.below(total), t = 0;
    while (flat >= params[t].numel()) flat -= params[t++].numel();
    elements.emplace_back(t, flat);
  }
  for (auto& p : params) p.set_requires_grad(true);
  return grad_check_elements([&] { return sample_loss(forward(s, model), s.target); }, params, elements, step);
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("televit_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace televit::fixtures
