// SPDX-License-Identifier: Apache-2.0
//
// Attention inspection: the captured [L,L] matrices of every layer and head,
// the segment layout of the sequence, and block masses. The block mass of a
// (query segment, key segment) pair is the mean over the query segment's rows
// of the attention summed over the key segment's columns, so each query
// segment's masses sum to 1.
#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "televit/model.hpp"
#include "televit/ppm.hpp"

namespace televit {

struct AttentionReport {
  Variant variant = Variant::local_only;
  std::size_t length = 0;  // L
  std::size_t layers = 0, heads = 0;
  /// matrices[layer][head], row-major L*L, rows are queries.
  std::vector<std::vector<std::vector<double>>> matrices;
  std::vector<SegmentSpan> spans;
  /// block_mass[layer][head][q * S + k] over the S present segments.
  std::vector<std::vector<std::vector<double>>> block_mass;
  /// Head-mean of block_mass, [layer][q * S + k].
  std::vector<std::vector<double>> mean_block_mass;

  std::size_t segments() const { return spans.size(); }
  const std::vector<double>& matrix(std::size_t layer, std::size_t head) const;
};

/// Block masses of one [L,L] matrix over the given spans.
std::vector<double> block_masses(const std::vector<double>& matrix, std::size_t length,
                                 const std::vector<SegmentSpan>& spans);

/// Runs one forward pass with attention capture.
AttentionReport extract_attention(const TeleViTModel& model, const Sample& sample);

nlohmann::json block_mass_json(const AttentionReport& report);

/// Heatmap of one matrix: min-max scaled gray levels (a constant matrix is
/// mid-gray) with one-pixel separator lines between segments, so the image
/// is (L + S - 1) pixels square.
Image attention_heatmap(const AttentionReport& report, std::size_t layer, std::size_t head);
void export_attention_heatmap(const AttentionReport& report, std::size_t layer, std::size_t head,
                              const std::filesystem::path& path);

}  // namespace televit
