// SPDX-License-Identifier: Apache-2.0
#include "televit/tokenization.hpp"

#include "televit/errors.hpp"

namespace televit {

bool uses_indices(Variant v) {
  return v == Variant::with_indices || v == Variant::with_indices_and_global;
}

bool uses_global(Variant v) {
  return v == Variant::with_global || v == Variant::with_indices_and_global;
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::local_only: return "local_only";
    case Variant::with_indices: return "with_indices";
    case Variant::with_global: return "with_global";
    case Variant::with_indices_and_global: return "with_indices_and_global";
  }
  return "?";
}

std::string to_string(Segment s) {
  switch (s) {
    case Segment::cls: return "cls";
    case Segment::local: return "local";
    case Segment::indices: return "indices";
    case Segment::global: return "global";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  if (name == "local_only" || name == "vit") return Variant::local_only;
  if (name == "with_indices" || name == "televit_i") return Variant::with_indices;
  if (name == "with_global" || name == "televit_g") return Variant::with_global;
  if (name == "with_indices_and_global" || name == "televit_ig") return Variant::with_indices_and_global;
  throw ConfigError("unknown variant '" + name + "'");
}

std::size_t spatial_token_count(std::size_t height, std::size_t width, const PatchSize& patch) {
  if (patch.h == 0 || patch.w == 0) throw TokenizationError("patch dims must be positive");
  if (height % patch.h != 0)
    throw TokenizationError("height " + std::to_string(height) + " not divisible by patch height " +
                            std::to_string(patch.h));
  if (width % patch.w != 0)
    throw TokenizationError("width " + std::to_string(width) + " not divisible by patch width " +
                            std::to_string(patch.w));
  return (height / patch.h) * (width / patch.w);
}

namespace {

TokenSet tokenize_spatial(const Tensor& x, const PatchSize& patch, Source source) {
  if (x.rank() != 3)
    throw TokenizationError("spatial input must be [C,H,W], got " + shape_str(x.shape()));
  if (patch.t != 1)
    throw TokenizationError("temporal patch extent must be 1, got " + std::to_string(patch.t));
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  spatial_token_count(h, w, patch);
  TokenSet set;
  set.source = source;
  set.rows = h / patch.h;
  set.cols = w / patch.w;
  set.channels = c;
  set.patch_h = patch.h;
  set.patch_w = patch.w;
  const std::size_t dim = c * patch.h * patch.w;
  std::vector<double> out(set.count() * dim);
  const auto in = x.data();
  std::size_t k = 0;
  for (std::size_t r = 0; r < set.rows; ++r)
    for (std::size_t q = 0; q < set.cols; ++q)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < patch.h; ++y) {
          const std::size_t row = (ch * h + r * patch.h + y) * w + q * patch.w;
          for (std::size_t xx = 0; xx < patch.w; ++xx) out[k++] = in[row + xx];
        }
  set.tokens = Tensor(Shape{set.count(), dim}, std::move(out));
  return set;
}

}  // namespace

TokenSet tokenize_local(const Tensor& x_l, const TokenizationSpec& spec) {
  return tokenize_spatial(x_l, spec.local, Source::local);
}

TokenSet tokenize_global(const Tensor& x_g, const TokenizationSpec& spec) {
  return tokenize_spatial(x_g, spec.global, Source::global);
}

TokenSet tokenize_indices(const Tensor& x_i, std::size_t token_size) {
  if (x_i.rank() != 2)
    throw TokenizationError("index input must be [C,T], got " + shape_str(x_i.shape()));
  if (token_size == 0 || x_i.dim(1) % token_size != 0)
    throw TokenizationError("index series length " + std::to_string(x_i.dim(1)) +
                            " not divisible by token size " + std::to_string(token_size));
  TokenSet set;
  set.source = Source::indices;
  set.rows = x_i.dim(0);
  set.cols = x_i.dim(1) / token_size;
  set.channels = 1;
  set.patch_h = 1;
  set.patch_w = token_size;
  // Row-major [C, T] already is index-major with consecutive time windows.
  set.tokens = Tensor(Shape{set.count(), token_size},
                      std::vector<double>(x_i.data().begin(), x_i.data().end()));
  return set;
}

Tensor detokenize(const TokenSet& set) {
  const auto in = set.tokens.data();
  if (set.source == Source::indices)
    return Tensor(Shape{set.rows, set.cols * set.patch_w}, std::vector<double>(in.begin(), in.end()));
  const std::size_t h = set.rows * set.patch_h, w = set.cols * set.patch_w;
  std::vector<double> out(set.channels * h * w);
  std::size_t k = 0;
  for (std::size_t r = 0; r < set.rows; ++r)
    for (std::size_t q = 0; q < set.cols; ++q)
      for (std::size_t ch = 0; ch < set.channels; ++ch)
        for (std::size_t y = 0; y < set.patch_h; ++y) {
          const std::size_t row = (ch * h + r * set.patch_h + y) * w + q * set.patch_w;
          for (std::size_t xx = 0; xx < set.patch_w; ++xx) out[row + xx] = in[k++];
        }
  return Tensor(Shape{set.channels, h, w}, std::move(out));
}

std::vector<SegmentSpan> segment_spans(const std::vector<Segment>& segment_map) {
  std::vector<SegmentSpan> spans;
  for (std::size_t i = 0; i < segment_map.size(); ++i) {
    if (spans.empty() || spans.back().segment != segment_map[i])
      spans.push_back({segment_map[i], i, i + 1});
    else
      spans.back().end = i + 1;
  }
  return spans;
}

namespace {

const TokenSet* find_source(const std::vector<TokenSet>& sets, Source source) {
  const TokenSet* found = nullptr;
  for (const auto& s : sets) {
    if (s.source != source) continue;
    if (found) throw ConfigError("duplicate token set for one source");
    found = &s;
  }
  return found;
}

Tensor project(const TokenSet& set, const Tensor& weight, const Tensor& bias, const char* name) {
  if (weight.rank() != 2 || weight.dim(0) != set.token_dim())
    throw ConfigError(std::string(name) + " projection expects token_dim " +
                      std::to_string(weight.rank() == 2 ? weight.dim(0) : 0) + ", tokens have " +
                      std::to_string(set.token_dim()));
  return add_bias(matmul(set.tokens, weight), bias);
}

}  // namespace

EmbeddedSequence embed_sequence(const std::vector<TokenSet>& token_sets,
                                const EmbeddingParams& params, Variant variant) {
  const TokenSet* local = find_source(token_sets, Source::local);
  const TokenSet* indices = find_source(token_sets, Source::indices);
  const TokenSet* global = find_source(token_sets, Source::global);
  if (!local) throw ConfigError("embed_sequence: local tokens are required");
  if (uses_indices(variant) != (indices != nullptr))
    throw ConfigError("embed_sequence: index tokens inconsistent with variant " + to_string(variant));
  if (uses_global(variant) != (global != nullptr))
    throw ConfigError("embed_sequence: global tokens inconsistent with variant " + to_string(variant));

  const std::size_t d = params.cls.numel();
  EmbeddedSequence seq;
  std::vector<Tensor> parts;
  parts.push_back(reshape(params.cls, Shape{1, d}));
  seq.segment_map.push_back(Segment::cls);

  parts.push_back(project(*local, params.local_weight, params.local_bias, "local"));
  seq.segment_map.insert(seq.segment_map.end(), local->count(), Segment::local);
  if (indices) {
    if (!params.indices_weight || !params.indices_bias)
      throw ConfigError("embed_sequence: missing index projection");
    parts.push_back(project(*indices, *params.indices_weight, *params.indices_bias, "indices"));
    seq.segment_map.insert(seq.segment_map.end(), indices->count(), Segment::indices);
  }
  if (global) {
    if (!params.global_weight || !params.global_bias)
      throw ConfigError("embed_sequence: missing global projection");
    parts.push_back(project(*global, *params.global_weight, *params.global_bias, "global"));
    seq.segment_map.insert(seq.segment_map.end(), global->count(), Segment::global);
  }
  const Tensor tokens = concat(parts);
  if (params.positional.shape() != tokens.shape())
    throw ConfigError("embed_sequence: positional table " + shape_str(params.positional.shape()) +
                      " does not match sequence " + shape_str(tokens.shape()));
  seq.embeddings = add(tokens, params.positional);
  seq.positional_table = to_string(variant);
  return seq;
}

}  // namespace televit
