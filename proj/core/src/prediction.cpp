// SPDX-License-Identifier: Apache-2.0
#include "televit/prediction.hpp"

#include <algorithm>
#include <fstream>
#include <memory>

#include "televit/byte_io.hpp"
#include "televit/errors.hpp"
#include "televit/parallel.hpp"
#include "televit/ppm.hpp"

namespace televit {

namespace {

std::vector<bool> land_cells(const DataCube& cube) {
  std::vector<bool> land(cube.plane());
  for (std::size_t r = 0; r < cube.grid.n_lat; ++r)
    for (std::size_t c = 0; c < cube.grid.n_lon; ++c) land[r * cube.grid.n_lon + c] = cube.is_land(r, c);
  return land;
}

// render_field takes a contiguous bool span; vector<bool> is packed.
std::unique_ptr<bool[]> unpack(const std::vector<bool>& bits) {
  auto out = std::make_unique<bool[]>(bits.size());
  std::copy(bits.begin(), bits.end(), out.get());
  return out;
}

}  // namespace

PredictionMap stitch_prediction(const DataCube& fine, std::size_t patch, const std::vector<PatchProbability>& patches,
                                std::size_t t, std::size_t h, double mask_below) {
  const std::size_t n_lat = fine.grid.n_lat, n_lon = fine.grid.n_lon;
  if (patch == 0 || n_lat % patch != 0 || n_lon % patch != 0)
    throw ConfigError("grid " + std::to_string(n_lat) + "x" + std::to_string(n_lon) + " not divisible by patch " +
                      std::to_string(patch));
  const std::size_t cols = n_lon / patch, count = (n_lat / patch) * cols;
  std::vector<const PatchProbability*> slot(count, nullptr);
  for (const auto& p : patches) {
    if (p.patch_index >= count) throw ContractError("patch index " + std::to_string(p.patch_index) + " out of range");
    if (slot[p.patch_index]) throw ContractError("patch " + std::to_string(p.patch_index) + " given twice");
    if (p.proba.size() != patch * patch)
      throw ContractError("patch " + std::to_string(p.patch_index) + " has " + std::to_string(p.proba.size()) +
                          " values, expected " + std::to_string(patch * patch));
    slot[p.patch_index] = &p;
  }
  std::string missing;
  for (std::size_t i = 0; i < count; ++i)
    if (!slot[i]) missing += (missing.empty() ? "" : ", ") + std::to_string(i);
  if (!missing.empty()) throw DataError("prediction map is missing patches: " + missing);

  PredictionMap map;
  map.n_lat = n_lat;
  map.n_lon = n_lon;
  map.t = t;
  map.h = h;
  map.mask_below = mask_below;
  map.land = land_cells(fine);
  map.proba.assign(n_lat * n_lon, 0.0);
  map.valid.assign(n_lat * n_lon, false);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t r0 = (i / cols) * patch, c0 = (i % cols) * patch;
    for (std::size_t y = 0; y < patch; ++y)
      for (std::size_t x = 0; x < patch; ++x) {
        const std::size_t cell = (r0 + y) * n_lon + c0 + x;
        const double v = slot[i]->proba[y * patch + x];
        if (map.land[cell] && v >= mask_below) {
          map.proba[cell] = v;
          map.valid[cell] = true;
        }
      }
  }
  if (fine.target) {
    const std::size_t tt = t + h;
    if (tt >= fine.n_steps()) throw DataError("target step " + std::to_string(tt) + " is past the cube end");
    const auto& v = fine.target->values;
    map.target.assign(v.begin() + static_cast<std::ptrdiff_t>(tt * fine.plane()),
                      v.begin() + static_cast<std::ptrdiff_t>((tt + 1) * fine.plane()));
  }
  return map;
}

PredictionMap predict_map(const TeleViTModel& model, const DataCube& fine, const DataCube& coarse, std::size_t t,
                          std::size_t h, std::size_t patch, double mask_below) {
  SampleOptions options;
  options.patch = patch;
  const auto samples = samples_at(fine, coarse, t, h, options);
  std::vector<PatchProbability> patches(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) {
    NoGradGuard no_grad;
    const Tensor p = predict_proba(forward(samples[i], model));
    patches[i] = {samples[i].patch_index, {p.data().begin(), p.data().end()}};
  });
  return stitch_prediction(fine, patch, patches, t, h, mask_below);
}

nlohmann::json prediction_header(const PredictionMap& map) {
  std::size_t valid = 0, sea = 0;
  for (std::size_t i = 0; i < map.valid.size(); ++i) {
    valid += map.valid[i];
    sea += !map.land[i];
  }
  nlohmann::json j = {{"format", "televit-prediction"},
                      {"version", 1},
                      {"shape", {map.n_lat, map.n_lon}},
                      {"order", "lat,lon"},
                      {"dtype", "f32"},
                      {"file", "proba.f32"},
                      {"t", map.t},
                      {"h", map.h},
                      {"mask_below", map.mask_below},
                      {"cells_valid", valid},
                      {"cells_sea", sea},
                      {"cells_below_threshold", map.valid.size() - valid - sea}};
  j["target_file"] = map.target.empty() ? nlohmann::json(nullptr) : nlohmann::json("target.f32");
  return j;
}

void export_prediction_map(const PredictionMap& map, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_array_file(dir / "proba.f32", map.proba, true);
  {
    std::ofstream out(dir / "proba.json", std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / "proba.json").string());
    out << prediction_header(map).dump(2) << '\n';
  }
  const auto valid = unpack(map.valid);
  write_ppm(dir / "proba.ppm",
            render_field(map.proba, map.n_lat, map.n_lon, 0.0, 1.0, {valid.get(), map.valid.size()}));
  if (!map.target.empty()) {
    write_array_file(dir / "target.f32", map.target, true);
    const auto land = unpack(map.land);
    write_ppm(dir / "target.ppm",
              render_field(map.target, map.n_lat, map.n_lon, 0.0, 1.0, {land.get(), map.land.size()}));
  }
}

std::vector<double> read_prediction_scores(const std::filesystem::path& dir) {
  std::ifstream in(dir / "proba.json");
  if (!in) throw IoError("cannot open " + (dir / "proba.json").string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad prediction header: ") + e.what());
  }
  if (j.value("format", "") != "televit-prediction" || !j.contains("shape") || j["shape"].size() != 2)
    throw DataError("not a prediction header: " + (dir / "proba.json").string());
  const std::size_t n = j["shape"][0].get<std::size_t>() * j["shape"][1].get<std::size_t>();
  return read_array_file(dir / j["file"].get<std::string>(), n, true);
}

}  // namespace televit
