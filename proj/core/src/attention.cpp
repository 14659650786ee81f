// SPDX-License-Identifier: Apache-2.0
#include "televit/attention.hpp"

#include <algorithm>

#include "televit/errors.hpp"

namespace televit {

namespace {

constexpr Rgb kSeparator{255, 64, 0};

}  // namespace

const std::vector<double>& AttentionReport::matrix(std::size_t layer, std::size_t head) const {
  if (layer >= layers || head >= heads)
    throw ContractError("attention layer " + std::to_string(layer) + " / head " + std::to_string(head) +
                        " out of range (" + std::to_string(layers) + " layers, " + std::to_string(heads) +
                        " heads)");
  return matrices[layer][head];
}

std::vector<double> block_masses(const std::vector<double>& matrix, std::size_t length,
                                 const std::vector<SegmentSpan>& spans) {
  if (matrix.size() != length * length) throw DimensionError("block_masses: matrix is not L x L");
  const std::size_t s = spans.size();
  std::vector<double> mass(s * s, 0.0);
  for (std::size_t q = 0; q < s; ++q) {
    const auto& qs = spans[q];
    for (std::size_t k = 0; k < s; ++k) {
      const auto& ks = spans[k];
      double total = 0.0;
      for (std::size_t r = qs.begin; r < qs.end; ++r)
        for (std::size_t c = ks.begin; c < ks.end; ++c) total += matrix[r * length + c];
      mass[q * s + k] = total / static_cast<double>(qs.end - qs.begin);
    }
  }
  return mass;
}

AttentionReport extract_attention(const TeleViTModel& model, const Sample& sample) {
  NoGradGuard no_grad;
  ForwardOptions options;
  options.capture_attention = true;
  const ForwardResult result = forward_detailed(sample, model, options);

  AttentionReport report;
  report.variant = model.config().variant;
  report.length = result.segment_map.size();
  report.layers = result.attention.size();
  report.heads = model.config().heads;
  report.spans = segment_spans(result.segment_map);
  const std::size_t L = report.length;
  const std::size_t S = report.spans.size();
  for (const Tensor& a : result.attention) {
    std::vector<std::vector<double>> per_head;
    std::vector<std::vector<double>> masses;
    std::vector<double> mean(S * S, 0.0);
    for (std::size_t h = 0; h < report.heads; ++h) {
      const auto data = a.data().subspan(h * L * L, L * L);
      per_head.emplace_back(data.begin(), data.end());
      masses.push_back(block_masses(per_head.back(), L, report.spans));
      for (std::size_t i = 0; i < S * S; ++i) mean[i] += masses.back()[i];
    }
    for (double& m : mean) m /= static_cast<double>(report.heads);
    report.matrices.push_back(std::move(per_head));
    report.block_mass.push_back(std::move(masses));
    report.mean_block_mass.push_back(std::move(mean));
  }
  return report;
}

nlohmann::json block_mass_json(const AttentionReport& report) {
  nlohmann::json segments = nlohmann::json::array();
  for (const auto& s : report.spans)
    segments.push_back({{"segment", to_string(s.segment)}, {"begin", s.begin}, {"end", s.end}});
  const std::size_t S = report.segments();
  auto as_rows = [&](const std::vector<double>& flat) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t q = 0; q < S; ++q)
      rows.push_back(std::vector<double>(flat.begin() + static_cast<long>(q * S),
                                         flat.begin() + static_cast<long>((q + 1) * S)));
    return rows;
  };
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < report.layers; ++l) {
    nlohmann::json heads = nlohmann::json::array();
    for (std::size_t h = 0; h < report.heads; ++h) heads.push_back(as_rows(report.block_mass[l][h]));
    layers.push_back({{"layer", l}, {"mean", as_rows(report.mean_block_mass[l])}, {"heads", heads}});
  }
  return {{"variant", to_string(report.variant)},
          {"length", report.length},
          {"segments", segments},
          {"rows", "query segment"},
          {"cols", "key segment"},
          {"layers", layers}};
}

Image attention_heatmap(const AttentionReport& report, std::size_t layer, std::size_t head) {
  const auto& m = report.matrix(layer, head);
  const std::size_t L = report.length;
  const auto [lo_it, hi_it] = std::minmax_element(m.begin(), m.end());
  const double lo = *lo_it, hi = *hi_it;

  // pixel offset of each position after the separators before it
  std::vector<std::size_t> offset(L, 0);
  std::size_t shift = 0;
  for (std::size_t s = 0; s < report.spans.size(); ++s) {
    for (std::size_t p = report.spans[s].begin; p < report.spans[s].end; ++p) offset[p] = p + shift;
    if (s + 1 < report.spans.size()) ++shift;
  }
  const std::size_t side = L + shift;
  Image image(side, side, kSeparator);
  for (std::size_t r = 0; r < L; ++r)
    for (std::size_t c = 0; c < L; ++c) image.at(offset[r], offset[c]) = gray(m[r * L + c], lo, hi);
  return image;
}

void export_attention_heatmap(const AttentionReport& report, std::size_t layer, std::size_t head,
                              const std::filesystem::path& path) {
  write_ppm(path, attention_heatmap(report, layer, head));
}

}  // namespace televit
