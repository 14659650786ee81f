// SPDX-License-Identifier: Apache-2.0
#include "televit/experiment.hpp"

#include "televit/checkpoint.hpp"
#include "televit/errors.hpp"
#include "json_keys.hpp"

namespace televit {

void ExperimentConfig::validate() const {
  if (preset != "desk" && preset != "full") throw ConfigError("preset must be \"desk\" or \"full\", got \"" + preset + "\"");
  if (!model.is_object()) throw ConfigError("'model' must be an object");
  if (patch == 0) throw ConfigError("patch must be positive");
  if (coarsen_factor == 0) throw ConfigError("coarsen_factor must be positive");
  if (history_months == 0) throw ConfigError("history_months must be positive");
  train.validate();
  split.validate();
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = {{"preset", c.preset},
       {"model", c.model},
       {"model_seed", c.model_seed},
       {"train", c.train},
       {"split", c.split},
       {"patch", c.patch},
       {"coarsen_factor", c.coarsen_factor},
       {"history_months", c.history_months}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  detail::require_known_keys(j, ExperimentConfig{}, "experiment config");
  try {
    if (j.contains("preset")) j.at("preset").get_to(c.preset);
    if (j.contains("model")) c.model = j.at("model");
    if (j.contains("model_seed")) j.at("model_seed").get_to(c.model_seed);
    if (j.contains("train")) from_json(j.at("train"), c.train);
    if (j.contains("split")) from_json(j.at("split"), c.split);
    if (j.contains("patch")) j.at("patch").get_to(c.patch);
    if (j.contains("coarsen_factor")) j.at("coarsen_factor").get_to(c.coarsen_factor);
    if (j.contains("history_months")) j.at("history_months").get_to(c.history_months);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
}

PreparedData prepare_data(const DataCube& raw, const ExperimentConfig& config) {
  config.validate();
  PreparedData d;
  d.fine = preprocess(raw, compute_split_stats(raw, config.split));
  const DataCube rc = coarsen(raw, config.coarsen_factor);
  d.coarse = preprocess(rc, compute_split_stats(rc, config.split));
  SampleOptions options;
  options.patch = config.patch;
  options.history_months = config.history_months;
  d.sets = build_samples(d.fine, d.coarse, config.train.horizon, config.split, options);
  return d;
}

ModelConfig resolve_model_config(const ExperimentConfig& config, const PreparedData& data) {
  ModelConfig c = config.preset == "full" ? ModelConfig::full(config.train.variant)
                                           : ModelConfig::desk(config.train.variant);
  from_json(config.model, c);
  c.variant = config.train.variant;
  c.inputs.local_channels = data.fine.drivers.size();
  c.inputs.local_h = c.inputs.local_w = config.patch;
  c.inputs.global_channels = data.coarse.drivers.size();
  c.inputs.global_h = data.coarse.grid.n_lat;
  c.inputs.global_w = data.coarse.grid.n_lon;
  c.inputs.n_indices = data.fine.indices.size();
  c.inputs.index_length = config.history_months;
  c.out_h = c.out_w = config.patch;
  c.validate();
  return c;
}

}  // namespace televit
