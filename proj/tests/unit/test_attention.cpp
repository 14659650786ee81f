// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <fstream>
#include <iterator>

#include "fixtures.hpp"
#include "televit/attention.hpp"
#include "televit/errors.hpp"
#include "televit/ppm.hpp"

using namespace televit;

namespace {

ModelConfig small_at_full_length(Variant v) {
  ModelConfig c = ModelConfig::full(v);
  c.depth = 2;
  c.heads = 4;
  c.tokens.embed_dim = 64;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Attention, SpansAtFullInputSize) {
  const ModelConfig c = small_at_full_length(Variant::with_indices_and_global);
  const TeleViTModel m(c, 1);
  Rng rng(2);
  const AttentionReport r = extract_attention(m, fixtures::random_sample(c, rng));
  EXPECT_EQ(r.length, 198u);
  EXPECT_EQ(r.layers, 2u);
  EXPECT_EQ(r.heads, 4u);
  ASSERT_EQ(r.segments(), 4u);
  const std::pair<std::size_t, std::size_t> want[] = {{0, 1}, {1, 26}, {26, 126}, {126, 198}};
  const Segment order[] = {Segment::cls, Segment::local, Segment::indices, Segment::global};
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(r.spans[k].segment, order[k]);
    EXPECT_EQ(r.spans[k].begin, want[k].first);
    EXPECT_EQ(r.spans[k].end, want[k].second);
  }
  for (std::size_t l = 0; l < r.layers; ++l)
    for (std::size_t h = 0; h < r.heads; ++h) {
      const auto& a = r.matrix(l, h);
      ASSERT_EQ(a.size(), 198u * 198u);
      for (std::size_t q = 0; q < 198; ++q) {
        double row = 0;
        for (std::size_t k = 0; k < 198; ++k) row += a[q * 198 + k];
        ASSERT_NEAR(row, 1.0, 1e-10);
      }
      const auto& bm = r.block_mass[l][h];
      for (std::size_t q = 0; q < 4; ++q) {
        double row = 0;
        for (std::size_t k = 0; k < 4; ++k) row += bm[q * 4 + k];
        EXPECT_NEAR(row, 1.0, 1e-10);
      }
    }
  EXPECT_THROW(r.matrix(2, 0), ContractError);
  EXPECT_THROW(r.matrix(0, 4), ContractError);
}

TEST(Attention, LocalOnlyHasTwoSegments) {
  const ModelConfig c = ModelConfig::desk(Variant::local_only);
  Rng rng(3);
  const AttentionReport r = extract_attention(TeleViTModel(c, 4), fixtures::random_sample(c, rng));
  ASSERT_EQ(r.segments(), 2u);
  EXPECT_EQ(r.spans[0].segment, Segment::cls);
  EXPECT_EQ(r.spans[1].segment, Segment::local);
  EXPECT_EQ(r.length, 17u);
  EXPECT_EQ(r.block_mass[0][0].size(), 4u);
  const auto j = block_mass_json(r);
  EXPECT_EQ(j["segments"].size(), 2u);
  EXPECT_EQ(j["layers"].size(), 2u);
  EXPECT_EQ(j["variant"], "local_only");
}

TEST(Attention, BlockMassHandCase) {
  // L = 3, spans {0}, {1,2}
  const std::vector<double> a{0.5, 0.25, 0.25,  //
                              0.1, 0.6, 0.3,    //
                              0.3, 0.3, 0.4};
  const std::vector<SegmentSpan> spans{{Segment::cls, 0, 1}, {Segment::local, 1, 3}};
  const auto bm = block_masses(a, 3, spans);
  ASSERT_EQ(bm.size(), 4u);
  EXPECT_DOUBLE_EQ(bm[0], 0.5);
  EXPECT_DOUBLE_EQ(bm[1], 0.5);
  EXPECT_DOUBLE_EQ(bm[2], 0.2);
  EXPECT_DOUBLE_EQ(bm[3], 0.8);
}

TEST(Attention, UniformAttentionGivesMidGrayHeatmap) {
  const ModelConfig c = ModelConfig::desk(Variant::with_indices);
  TeleViTModel m(c, 5);
  for (auto& b : m.blocks) std::fill(b.qkv_weight.mutable_data().begin(), b.qkv_weight.mutable_data().end(), 0.0);
  Rng rng(6);
  const AttentionReport r = extract_attention(m, fixtures::random_sample(c, rng));
  const std::size_t L = r.length, S = r.segments();
  ASSERT_EQ(L, 117u);
  for (double v : r.matrix(1, 2)) ASSERT_NEAR(v, 1.0 / L, 1e-15);
  const Image img = attention_heatmap(r, 1, 2);
  EXPECT_EQ(img.width, L + S - 1);
  EXPECT_EQ(img.height, L + S - 1);
  std::size_t gray = 0, other = 0;
  for (const Rgb& p : img.pixels) (p == Rgb{128, 128, 128} ? gray : other)++;
  EXPECT_EQ(gray, L * L);
  EXPECT_EQ(other, img.pixels.size() - L * L);
  // cls attends to local with mass 16/117
  EXPECT_NEAR(r.mean_block_mass[0][1], 16.0 / 117.0, 1e-12);
}

TEST(Attention, ExportIsBitwiseReproducible) {
  const ModelConfig c = ModelConfig::desk(Variant::with_indices_and_global);
  Rng rng(7);
  const Sample s = fixtures::random_sample(c, rng);
  const auto dir = fixtures::fresh_dir("attn");
  export_attention_heatmap(extract_attention(TeleViTModel(c, 8), s), 0, 0, dir / "a.ppm");
  export_attention_heatmap(extract_attention(TeleViTModel(c, 8), s), 0, 0, dir / "b.ppm");
  const std::string a = slurp(dir / "a.ppm");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(dir / "b.ppm"));
  const Image back = read_ppm(dir / "a.ppm");
  EXPECT_EQ(back.width, 125u + 3u);
}

TEST(Ppm, RoundTripAndGray) {
  Image img(3, 2);
  img.at(0, 0) = {255, 0, 0};
  img.at(1, 2) = {1, 2, 3};
  const auto dir = fixtures::fresh_dir("ppm");
  write_ppm(dir / "x.ppm", img);
  const Image back = read_ppm(dir / "x.ppm");
  EXPECT_EQ(back.width, 3u);
  EXPECT_EQ(back.height, 2u);
  EXPECT_EQ(back.pixels, img.pixels);
  EXPECT_EQ(slurp(dir / "x.ppm").substr(0, 2), "P6");
  EXPECT_EQ(gray(0.0, 0.0, 1.0), (Rgb{0, 0, 0}));
  EXPECT_EQ(gray(1.0, 0.0, 1.0), (Rgb{255, 255, 255}));
  EXPECT_EQ(gray(3.0, 2.0, 2.0), (Rgb{128, 128, 128}));
  EXPECT_THROW(read_ppm(dir / "missing.ppm"), IoError);
}

TEST(Ppm, RenderFieldMasksCells) {
  const std::vector<double> v{0.0, 0.5, 1.0, 0.25};
  const bool mask[] = {true, true, false, true};
  const Image img = render_field(v, 2, 2, 0.0, 1.0, mask);
  EXPECT_EQ(img.at(0, 0), (Rgb{0, 0, 0}));
  EXPECT_EQ(img.at(1, 0), (Rgb{0, 0, 96}));
  EXPECT_EQ(img.at(0, 1), (Rgb{128, 128, 128}));
}
