// SPDX-License-Identifier: Apache-2.0
//
// TeleViT: a pre-norm transformer encoder over the asymmetric token sequence
// with a linear per-pixel decoder on the classification token.
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "televit/rng.hpp"
#include "televit/sample.hpp"
#include "televit/tensor.hpp"
#include "televit/tokenization.hpp"

namespace televit {

struct InputShapes {
  std::size_t local_channels = 14, local_h = 80, local_w = 80;
  std::size_t global_channels = 14, global_h = 180, global_w = 360;  // (lat, lon)
  std::size_t n_indices = 10, index_length = 10;
};

struct ModelConfig {
  Variant variant = Variant::with_indices_and_global;
  std::size_t depth = 8;   // K
  std::size_t heads = 12;  // A
  double mlp_ratio = 4.0;
  TokenizationSpec tokens;  // holds D as tokens.embed_dim
  InputShapes inputs;
  std::size_t out_h = 80, out_w = 80;
  std::size_t n_classes = 2;
  double dropout = 0.0;
  double layer_norm_eps = 1e-5;

  /// D=768, K=8, A=12 with 80x80 local, 180x360 global, 10x10 index inputs.
  static ModelConfig full(Variant variant);
  /// D=64, K=2, A=4 on 16x16 local patches, 8x16 global grid, 10x10 index inputs.
  static ModelConfig desk(Variant variant);

  std::size_t embed_dim() const { return tokens.embed_dim; }
  std::size_t mlp_hidden() const;
  std::size_t local_tokens() const;
  std::size_t global_tokens() const;
  std::size_t index_tokens() const;
  /// 1 + tokens of the active sources.
  std::size_t sequence_length() const;

  /// Throws ConfigError / TokenizationError for inconsistent settings.
  void validate() const;
};

/// Closed-form parameter count of a configuration.
std::size_t expected_parameter_count(const ModelConfig& config);

struct EncoderBlock {
  Tensor ln1_gamma, ln1_beta;
  Tensor qkv_weight, qkv_bias;  // [D, 3D], [3D]
  Tensor out_weight, out_bias;  // [D, D], [D]
  Tensor ln2_gamma, ln2_beta;
  Tensor mlp1_weight, mlp1_bias;  // [D, hidden]
  Tensor mlp2_weight, mlp2_bias;  // [hidden, D]
};

struct NamedParam {
  std::string name;
  Tensor tensor;
};

class TeleViTModel {
 public:
  /// Shapes per config; weights truncated-normal (std 0.02), biases zero, norms identity.
  TeleViTModel(ModelConfig config, std::uint64_t seed);

  /// Same shapes, all weights left zero (checkpoint loading fills them).
  static TeleViTModel zeros(ModelConfig config, std::uint64_t seed = 0);

  const ModelConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }

  /// Every learnable tensor in the fixed checkpoint order.
  std::vector<NamedParam> parameters() const;
  std::size_t parameter_count() const;

  EmbeddingParams embedding;
  std::vector<EncoderBlock> blocks;
  Tensor decoder_weight;  // [D, n_classes * out_h * out_w]
  Tensor decoder_bias;

 private:
  explicit TeleViTModel(ModelConfig config);
  void initialize(std::uint64_t seed);

  ModelConfig config_;
  std::uint64_t seed_ = 0;
};

struct EncoderOutput {
  Tensor sequence;                 // [L, D]
  std::vector<Tensor> attention;   // per layer [A, L, L], filled on request
};

struct ForwardOptions {
  bool capture_attention = false;
  Rng* dropout_rng = nullptr;  // dropout only runs when set and config.dropout > 0
};

EncoderOutput encoder_forward(const EmbeddedSequence& seq, const TeleViTModel& model,
                              const ForwardOptions& options = {});

/// cls output [D] -> logits [n_classes, out_h, out_w]. Class 1 is "burned".
Tensor decode_cls(const Tensor& cls_out, const TeleViTModel& model);

/// Token sets a model's variant consumes from a sample.
std::vector<TokenSet> tokenize_sample(const Sample& sample, const ModelConfig& config);

struct ForwardResult {
  Tensor logits;
  std::vector<Tensor> attention;
  std::vector<Segment> segment_map;
};

ForwardResult forward_detailed(const Sample& sample, const TeleViTModel& model,
                               const ForwardOptions& options = {});
Tensor forward(const Sample& sample, const TeleViTModel& model,
               const ForwardOptions& options = {});

/// Positive-class softmax plane [H, W] of logits [2, H, W].
Tensor predict_proba(const Tensor& logits);

}  // namespace televit
