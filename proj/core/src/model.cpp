// SPDX-License-Identifier: Apache-2.0
#include "televit/model.hpp"

#include <cmath>

#include "televit/errors.hpp"

namespace televit {

ModelConfig ModelConfig::full(Variant variant) {
  ModelConfig c;
  c.variant = variant;
  return c;
}

ModelConfig ModelConfig::desk(Variant variant) {
  ModelConfig c;
  c.variant = variant;
  c.depth = 2;
  c.heads = 4;
  c.tokens.embed_dim = 64;
  c.tokens.local = {1, 4, 4};
  c.tokens.global = {1, 4, 4};
  c.inputs.local_h = c.inputs.local_w = 16;
  c.inputs.global_h = 8;
  c.inputs.global_w = 16;
  c.out_h = c.out_w = 16;
  return c;
}

std::size_t ModelConfig::mlp_hidden() const {
  return static_cast<std::size_t>(std::llround(mlp_ratio * static_cast<double>(embed_dim())));
}

std::size_t ModelConfig::local_tokens() const {
  return spatial_token_count(inputs.local_h, inputs.local_w, tokens.local);
}

std::size_t ModelConfig::global_tokens() const {
  return spatial_token_count(inputs.global_h, inputs.global_w, tokens.global);
}

std::size_t ModelConfig::index_tokens() const {
  if (tokens.indices == 0 || inputs.index_length % tokens.indices != 0)
    throw TokenizationError("index length " + std::to_string(inputs.index_length) +
                            " not divisible by index token size " + std::to_string(tokens.indices));
  return inputs.n_indices * (inputs.index_length / tokens.indices);
}

std::size_t ModelConfig::sequence_length() const {
  std::size_t n = 1 + local_tokens();
  if (uses_indices(variant)) n += index_tokens();
  if (uses_global(variant)) n += global_tokens();
  return n;
}

void ModelConfig::validate() const {
  if (embed_dim() == 0) throw ConfigError("embed_dim must be positive");
  if (depth < 1) throw ConfigError("depth must be >= 1");
  if (heads < 1) throw ConfigError("heads must be >= 1");
  if (embed_dim() % heads != 0)
    throw ConfigError("embed_dim " + std::to_string(embed_dim()) + " not divisible by heads " +
                      std::to_string(heads));
  if (!(mlp_ratio > 0.0) || mlp_hidden() == 0) throw ConfigError("mlp_ratio must be positive");
  if (n_classes != 2) throw ConfigError("n_classes must be 2");
  if (out_h == 0 || out_w == 0) throw ConfigError("output dims must be positive");
  if (inputs.local_channels == 0 || inputs.global_channels == 0 || inputs.n_indices == 0 ||
      inputs.index_length == 0)
    throw ConfigError("input dims must be positive");
  if (tokens.local.t != 1 || tokens.global.t != 1)
    throw TokenizationError("temporal token extent must be 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
  if (!(layer_norm_eps > 0.0)) throw ConfigError("layer_norm_eps must be positive");
  sequence_length();
  if (uses_global(variant)) global_tokens();
  if (uses_indices(variant)) index_tokens();
}

std::size_t expected_parameter_count(const ModelConfig& c) {
  c.validate();
  const std::size_t d = c.embed_dim(), hidden = c.mlp_hidden();
  const std::size_t local_dim = c.inputs.local_channels * c.tokens.local.h * c.tokens.local.w;
  const std::size_t global_dim = c.inputs.global_channels * c.tokens.global.h * c.tokens.global.w;
  std::size_t n = local_dim * d + d;
  if (uses_indices(c.variant)) n += c.tokens.indices * d + d;
  if (uses_global(c.variant)) n += global_dim * d + d;
  n += d;                          // cls
  n += c.sequence_length() * d;    // positional table
  const std::size_t block = 2 * d + (d * 3 * d + 3 * d) + (d * d + d) + 2 * d +
                            (d * hidden + hidden) + (hidden * d + d);
  n += c.depth * block;
  const std::size_t out = c.n_classes * c.out_h * c.out_w;
  n += d * out + out;
  return n;
}

// ---------------------------------------------------------------------------

TeleViTModel::TeleViTModel(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto& c = config_;
  const std::size_t d = c.embed_dim(), hidden = c.mlp_hidden();
  const bool g = true;
  auto& e = embedding;
  e.local_weight = Tensor(Shape{c.inputs.local_channels * c.tokens.local.h * c.tokens.local.w, d}, g);
  e.local_bias = Tensor(Shape{d}, g);
  if (uses_indices(c.variant)) {
    e.indices_weight = Tensor(Shape{c.tokens.indices, d}, g);
    e.indices_bias = Tensor(Shape{d}, g);
  }
  if (uses_global(c.variant)) {
    e.global_weight =
        Tensor(Shape{c.inputs.global_channels * c.tokens.global.h * c.tokens.global.w, d}, g);
    e.global_bias = Tensor(Shape{d}, g);
  }
  e.cls = Tensor(Shape{d}, g);
  e.positional = Tensor(Shape{c.sequence_length(), d}, g);
  blocks.resize(c.depth);
  for (auto& b : blocks) {
    b.ln1_gamma = Tensor::full(Shape{d}, 1.0);
    b.ln1_beta = Tensor(Shape{d});
    b.qkv_weight = Tensor(Shape{d, 3 * d});
    b.qkv_bias = Tensor(Shape{3 * d});
    b.out_weight = Tensor(Shape{d, d});
    b.out_bias = Tensor(Shape{d});
    b.ln2_gamma = Tensor::full(Shape{d}, 1.0);
    b.ln2_beta = Tensor(Shape{d});
    b.mlp1_weight = Tensor(Shape{d, hidden});
    b.mlp1_bias = Tensor(Shape{hidden});
    b.mlp2_weight = Tensor(Shape{hidden, d});
    b.mlp2_bias = Tensor(Shape{d});
  }
  const std::size_t out = c.n_classes * c.out_h * c.out_w;
  decoder_weight = Tensor(Shape{d, out});
  decoder_bias = Tensor(Shape{out});
  for (auto& p : parameters()) p.tensor.set_requires_grad(true);
}

TeleViTModel::TeleViTModel(ModelConfig config, std::uint64_t seed) : TeleViTModel(std::move(config)) {
  initialize(seed);
}

TeleViTModel TeleViTModel::zeros(ModelConfig config, std::uint64_t seed) {
  TeleViTModel model(std::move(config));
  model.seed_ = seed;
  return model;
}

void TeleViTModel::initialize(std::uint64_t seed) {
  seed_ = seed;
  Rng rng(seed);
  constexpr double kStd = 0.02;
  for (auto& p : parameters()) {
    const auto& n = p.name;
    const bool is_weight = n.ends_with("weight") || n == "embed.cls" || n == "embed.positional";
    if (!is_weight) continue;  // biases stay 0, norms stay identity
    for (auto& v : p.tensor.mutable_data()) v = rng.truncated_normal(kStd);
  }
}

std::vector<NamedParam> TeleViTModel::parameters() const {
  std::vector<NamedParam> out;
  const auto& e = embedding;
  out.push_back({"embed.local.weight", e.local_weight});
  out.push_back({"embed.local.bias", e.local_bias});
  if (e.indices_weight) {
    out.push_back({"embed.indices.weight", *e.indices_weight});
    out.push_back({"embed.indices.bias", *e.indices_bias});
  }
  if (e.global_weight) {
    out.push_back({"embed.global.weight", *e.global_weight});
    out.push_back({"embed.global.bias", *e.global_bias});
  }
  out.push_back({"embed.cls", e.cls});
  out.push_back({"embed.positional", e.positional});
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    const std::string p = "blocks." + std::to_string(i) + ".";
    out.push_back({p + "ln1.gamma", b.ln1_gamma});
    out.push_back({p + "ln1.beta", b.ln1_beta});
    out.push_back({p + "attn.qkv.weight", b.qkv_weight});
    out.push_back({p + "attn.qkv.bias", b.qkv_bias});
    out.push_back({p + "attn.out.weight", b.out_weight});
    out.push_back({p + "attn.out.bias", b.out_bias});
    out.push_back({p + "ln2.gamma", b.ln2_gamma});
    out.push_back({p + "ln2.beta", b.ln2_beta});
    out.push_back({p + "mlp.fc1.weight", b.mlp1_weight});
    out.push_back({p + "mlp.fc1.bias", b.mlp1_bias});
    out.push_back({p + "mlp.fc2.weight", b.mlp2_weight});
    out.push_back({p + "mlp.fc2.bias", b.mlp2_bias});
  }
  out.push_back({"decoder.weight", decoder_weight});
  out.push_back({"decoder.bias", decoder_bias});
  return out;
}

std::size_t TeleViTModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

// ---------------------------------------------------------------------------

namespace {

Tensor attention(const Tensor& x, const EncoderBlock& b, std::size_t heads,
                 std::vector<Tensor>* capture) {
  const std::size_t len = x.dim(0), d = x.dim(1), dh = d / heads;
  const Tensor qkv = add_bias(matmul(x, b.qkv_weight), b.qkv_bias);  // [L, 3D]
  const Tensor split = reshape(permute(reshape(qkv, Shape{len, 3, heads, dh}), {1, 2, 0, 3}),
                               Shape{3 * heads, len, dh});
  const Tensor q = slice(split, 0, heads);
  const Tensor k = slice(split, heads, 2 * heads);
  const Tensor v = slice(split, 2 * heads, 3 * heads);
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(dh));
  const Tensor scores = scale(bmm(q, permute(k, {0, 2, 1})), scale_factor);
  const Tensor probs = softmax(scores, 2);  // [A, L, L]
  if (capture) capture->push_back(probs.detach());
  const Tensor ctx = reshape(permute(bmm(probs, v), {1, 0, 2}), Shape{len, d});
  return add_bias(matmul(ctx, b.out_weight), b.out_bias);
}

Tensor maybe_dropout(const Tensor& x, const ModelConfig& c, const ForwardOptions& options) {
  if (c.dropout > 0.0 && options.dropout_rng) return dropout(x, c.dropout, *options.dropout_rng);
  return x;
}

}  // namespace

EncoderOutput encoder_forward(const EmbeddedSequence& seq, const TeleViTModel& model,
                              const ForwardOptions& options) {
  const auto& c = model.config();
  if (seq.length() != model.embedding.positional.dim(0) || seq.embeddings.dim(1) != c.embed_dim())
    throw ConfigError("encoder: sequence " + shape_str(seq.embeddings.shape()) +
                      " does not match the model's positional table " +
                      shape_str(model.embedding.positional.shape()));
  EncoderOutput out;
  Tensor x = seq.embeddings;
  for (const auto& b : model.blocks) {
    const Tensor h1 = layer_norm(x, b.ln1_gamma, b.ln1_beta, c.layer_norm_eps);
    x = add(x, maybe_dropout(attention(h1, b, c.heads, options.capture_attention ? &out.attention : nullptr),
                             c, options));
    const Tensor h2 = layer_norm(x, b.ln2_gamma, b.ln2_beta, c.layer_norm_eps);
    const Tensor mlp = add_bias(
        matmul(gelu(add_bias(matmul(h2, b.mlp1_weight), b.mlp1_bias)), b.mlp2_weight), b.mlp2_bias);
    x = add(x, maybe_dropout(mlp, c, options));
  }
  out.sequence = x;
  return out;
}

Tensor decode_cls(const Tensor& cls_out, const TeleViTModel& model) {
  const auto& c = model.config();
  if (cls_out.numel() != c.embed_dim())
    throw DimensionError("decode_cls: expected " + std::to_string(c.embed_dim()) + " values, got " +
                         shape_str(cls_out.shape()));
  const Tensor row = reshape(cls_out, Shape{1, c.embed_dim()});
  const Tensor flat = add_bias(matmul(row, model.decoder_weight), model.decoder_bias);
  return reshape(flat, Shape{c.n_classes, c.out_h, c.out_w});
}

std::vector<TokenSet> tokenize_sample(const Sample& sample, const ModelConfig& config) {
  const auto& in = config.inputs;
  const Shape local_shape{in.local_channels, in.local_h, in.local_w};
  if (sample.x_l.shape() != local_shape)
    throw DataError("local input " + shape_str(sample.x_l.shape()) + " does not match model " +
                    shape_str(local_shape));
  std::vector<TokenSet> sets;
  sets.push_back(tokenize_local(sample.x_l, config.tokens));
  if (uses_indices(config.variant)) {
    if (!sample.x_i) throw DataError("variant " + to_string(config.variant) + " needs index input x_i");
    const Shape expected{in.n_indices, in.index_length};
    if (sample.x_i->shape() != expected)
      throw DataError("index input " + shape_str(sample.x_i->shape()) + " does not match model " +
                      shape_str(expected));
    sets.push_back(tokenize_indices(*sample.x_i, config.tokens.indices));
  }
  if (uses_global(config.variant)) {
    if (!sample.x_g) throw DataError("variant " + to_string(config.variant) + " needs global input x_g");
    const Shape expected{in.global_channels, in.global_h, in.global_w};
    if (sample.x_g->shape() != expected)
      throw DataError("global input " + shape_str(sample.x_g->shape()) + " does not match model " +
                      shape_str(expected));
    sets.push_back(tokenize_global(*sample.x_g, config.tokens));
  }
  return sets;
}

ForwardResult forward_detailed(const Sample& sample, const TeleViTModel& model,
                               const ForwardOptions& options) {
  const auto seq = embed_sequence(tokenize_sample(sample, model.config()), model.embedding,
                                  model.config().variant);
  auto enc = encoder_forward(seq, model, options);
  ForwardResult result;
  result.logits = decode_cls(slice(enc.sequence, 0, 1), model);
  result.attention = std::move(enc.attention);
  result.segment_map = seq.segment_map;
  return result;
}

Tensor forward(const Sample& sample, const TeleViTModel& model, const ForwardOptions& options) {
  return forward_detailed(sample, model, options).logits;
}

Tensor predict_proba(const Tensor& logits) {
  if (logits.rank() != 3 || logits.dim(0) != 2)
    throw DimensionError("predict_proba: logits must be [2,H,W], got " + shape_str(logits.shape()));
  const std::size_t plane = logits.dim(1) * logits.dim(2);
  std::vector<double> out(plane);
  const auto z = logits.data();
  for (std::size_t i = 0; i < plane; ++i) {
    // 2-class softmax, positive plane: 1 / (1 + exp(z0 - z1))
    const double diff = z[i] - z[plane + i];
    out[i] = diff >= 0.0 ? std::exp(-diff) / (1.0 + std::exp(-diff)) : 1.0 / (1.0 + std::exp(diff));
  }
  return Tensor(Shape{logits.dim(1), logits.dim(2)}, std::move(out));
}

}  // namespace televit
