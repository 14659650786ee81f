// SPDX-License-Identifier: Apache-2.0
#include "televit/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "televit/byte_io.hpp"
#include "televit/errors.hpp"
#include "json_keys.hpp"

namespace televit {

namespace {

constexpr char kMagic[8] = {'T', 'V', 'I', 'T', 'C', 'K', 'P', 'T'};

nlohmann::json patch_json(const PatchSize& p) { return {p.t, p.h, p.w}; }

PatchSize patch_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("patch size must be [t, h, w]");
  return {j[0].get<std::size_t>(), j[1].get<std::size_t>(), j[2].get<std::size_t>()};
}

}  // namespace

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {
      {"variant", to_string(c.variant)},
      {"embed_dim", c.embed_dim()},
      {"depth", c.depth},
      {"heads", c.heads},
      {"mlp_ratio", c.mlp_ratio},
      {"patch_local", patch_json(c.tokens.local)},
      {"patch_global", patch_json(c.tokens.global)},
      {"patch_indices", c.tokens.indices},
      {"local_shape", {c.inputs.local_channels, c.inputs.local_h, c.inputs.local_w}},
      {"global_shape", {c.inputs.global_channels, c.inputs.global_h, c.inputs.global_w}},
      {"indices_shape", {c.inputs.n_indices, c.inputs.index_length}},
      {"out_h", c.out_h},
      {"out_w", c.out_w},
      {"n_classes", c.n_classes},
      {"dropout", c.dropout},
      {"layer_norm_eps", c.layer_norm_eps},
  };
}

// Missing keys keep the defaults already present in `c`, so a config file
// may override a preset partially.
void from_json(const nlohmann::json& j, ModelConfig& c) {
  detail::require_known_keys(j, ModelConfig{}, "model config");
  try {
    if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
    if (j.contains("embed_dim")) c.tokens.embed_dim = j.at("embed_dim").get<std::size_t>();
    if (j.contains("depth")) c.depth = j.at("depth").get<std::size_t>();
    if (j.contains("heads")) c.heads = j.at("heads").get<std::size_t>();
    if (j.contains("mlp_ratio")) c.mlp_ratio = j.at("mlp_ratio").get<double>();
    if (j.contains("patch_local")) c.tokens.local = patch_from(j.at("patch_local"));
    if (j.contains("patch_global")) c.tokens.global = patch_from(j.at("patch_global"));
    if (j.contains("patch_indices")) c.tokens.indices = j.at("patch_indices").get<std::size_t>();
    if (j.contains("local_shape")) {
      const auto& s = j.at("local_shape");
      c.inputs.local_channels = s.at(0);
      c.inputs.local_h = s.at(1);
      c.inputs.local_w = s.at(2);
    }
    if (j.contains("global_shape")) {
      const auto& s = j.at("global_shape");
      c.inputs.global_channels = s.at(0);
      c.inputs.global_h = s.at(1);
      c.inputs.global_w = s.at(2);
    }
    if (j.contains("indices_shape")) {
      const auto& s = j.at("indices_shape");
      c.inputs.n_indices = s.at(0);
      c.inputs.index_length = s.at(1);
    }
    if (j.contains("out_h")) c.out_h = j.at("out_h").get<std::size_t>();
    if (j.contains("out_w")) c.out_w = j.at("out_w").get<std::size_t>();
    if (j.contains("n_classes")) c.n_classes = j.at("n_classes").get<std::size_t>();
    if (j.contains("dropout")) c.dropout = j.at("dropout").get<double>();
    if (j.contains("layer_norm_eps")) c.layer_norm_eps = j.at("layer_norm_eps").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const TeleViTModel& model,
                     const CheckpointHeader& header) {
  nlohmann::json j = header.extra;
  j["format_version"] = 1;
  j["model_config"] = model.config();
  j["seed"] = model.seed();
  j["epoch"] = header.epoch;
  j["metrics"] = header.metrics;
  auto params = model.parameters();
  nlohmann::json listing = nlohmann::json::array();
  std::size_t values = 0;
  for (const auto& p : params) {
    listing.push_back({{"name", p.name}, {"shape", p.tensor.shape()}});
    values += p.tensor.numel();
  }
  j["parameters"] = listing;
  j["blob_bytes"] = values * sizeof(double);
  const std::string text = j.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  write_u64_le(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : params) write_f64_le(out, p.tensor.data());
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw DataError(path.string() + " is not a checkpoint file");
  const std::uint64_t len = read_u64_le(in);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError("truncated checkpoint header in " + path.string());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad checkpoint header: " + std::string(e.what()));
  }
  ModelConfig config;
  from_json(header.at("model_config"), config);
  TeleViTModel model = TeleViTModel::zeros(config, header.value("seed", std::uint64_t{0}));
  auto params = model.parameters();
  const auto& listing = header.at("parameters");
  if (listing.size() != params.size()) throw DataError("checkpoint parameter list mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (listing[i].at("name") != params[i].name ||
        listing[i].at("shape").get<Shape>() != params[i].tensor.shape())
      throw DataError("checkpoint parameter " + std::to_string(i) + " does not match the model");
    read_f64_le(in, params[i].tensor.mutable_data());
    if (!in) throw DataError("truncated checkpoint blob in " + path.string());
  }
  LoadedCheckpoint loaded{std::move(model), std::move(header)};
  return loaded;
}

}  // namespace televit
