// SPDX-License-Identifier: Apache-2.0
//
// Asymmetric tokenization: each input source is cut into tokens at its own
// granularity, projected to the shared embedding width, and assembled into
// one sequence behind a classification token.
//
// Layout conventions (fixed, relied on by attention analysis):
//   - spatial tokens enumerate patches row-major over (patch row, patch col);
//   - a spatial token flattens its patch channel-major, then row, then column;
//   - index tokens enumerate index-major, time within an index;
//   - the sequence is cls, local, indices, global (absent sources skipped).
#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "televit/tensor.hpp"

namespace televit {

/// Token extent. `t` is the temporal extent and must be 1: a token spans all
/// channels of one spatial patch.
struct PatchSize {
  std::size_t t = 1;
  std::size_t h = 16;
  std::size_t w = 16;
};

struct TokenizationSpec {
  PatchSize local{1, 16, 16};
  PatchSize global{1, 30, 30};
  std::size_t indices = 1;  // consecutive timesteps per index token
  std::size_t embed_dim = 768;
};

enum class Source { local, global, indices };
enum class Segment { cls, local, indices, global };

/// Which optional sources a model consumes alongside the local input.
enum class Variant { local_only, with_indices, with_global, with_indices_and_global };

bool uses_indices(Variant v);
bool uses_global(Variant v);
std::string to_string(Variant v);
std::string to_string(Segment s);
/// Accepts the canonical names and the short aliases vit, televit_i, televit_g, televit_ig.
Variant parse_variant(const std::string& name);

struct TokenSet {
  Source source = Source::local;
  Tensor tokens;            // [N, token_dim]
  std::size_t rows = 0;     // token grid; indices use (n_indices, n_time_tokens)
  std::size_t cols = 0;
  std::size_t channels = 0;
  std::size_t patch_h = 1;  // patch extent; for indices patch_w is the time extent
  std::size_t patch_w = 1;

  std::size_t count() const { return rows * cols; }
  std::size_t token_dim() const { return tokens.dim(1); }
};

TokenSet tokenize_local(const Tensor& x_l, const TokenizationSpec& spec);
TokenSet tokenize_global(const Tensor& x_g, const TokenizationSpec& spec);
TokenSet tokenize_indices(const Tensor& x_i, std::size_t token_size = 1);

/// Inverse layout of any tokenize_* call.
Tensor detokenize(const TokenSet& set);

/// Token count of a [C,H,W] input under a patch size.
std::size_t spatial_token_count(std::size_t height, std::size_t width, const PatchSize& patch);

/// Learnable pieces of the embedding stage. Projections are [token_dim, D].
struct EmbeddingParams {
  Tensor local_weight, local_bias;
  std::optional<Tensor> indices_weight, indices_bias;
  std::optional<Tensor> global_weight, global_bias;
  Tensor cls;         // [D]
  Tensor positional;  // [sequence_length, D], covers cls
};

struct EmbeddedSequence {
  Tensor embeddings;  // [L, D]
  std::vector<Segment> segment_map;
  std::string positional_table;  // variant the positional table belongs to

  std::size_t length() const { return segment_map.size(); }
};

/// Half-open position span of each segment present in a sequence, in order.
struct SegmentSpan {
  Segment segment;
  std::size_t begin;
  std::size_t end;
};
std::vector<SegmentSpan> segment_spans(const std::vector<Segment>& segment_map);

EmbeddedSequence embed_sequence(const std::vector<TokenSet>& token_sets,
                                const EmbeddingParams& params, Variant variant);

}  // namespace televit
