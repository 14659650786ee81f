// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "televit/datacube.hpp"
#include "televit/errors.hpp"

namespace televit {

namespace {

bool log_transformed(const DataCube& cube, const std::string& name) {
  const auto& list = cube.preprocessing.log_transform;
  return std::find(list.begin(), list.end(), name) != list.end();
}

double log1p_checked(double v, const std::string& name) {
  if (v <= -1.0) throw DataError("log1p undefined for value " + std::to_string(v) + " of '" + name + "'");
  return std::log1p(v);
}

}  // namespace

void to_json(nlohmann::json& j, const SplitStats& s) {
  j = {{"drivers", s.drivers},
       {"mean", s.mean},
       {"stddev", s.stddev},
       {"indices", s.indices},
       {"index_stddev", s.index_stddev}};
}

SplitStats compute_split_stats(const DataCube& cube, const SplitSpec& split) {
  split.validate();
  const auto& cal = cube.calendar;
  const std::size_t plane = cube.plane();
  std::vector<std::size_t> steps;
  for (std::size_t t = 0; t < cal.n_steps; ++t)
    if (split.train.contains(cal.year_of(t))) steps.push_back(t);
  if (steps.empty()) throw DataError("no cube steps fall in the training years");

  SplitStats stats;
  for (const auto& var : cube.drivers) {
    const bool logt = log_transformed(cube, var.name);
    double total = 0.0;
    for (auto t : steps)
      for (std::size_t i = 0; i < plane; ++i) {
        const double v = var.values[t * plane + i];
        total += logt ? log1p_checked(v, var.name) : v;
      }
    const double n = static_cast<double>(steps.size() * plane);
    const double mu = total / n;
    double sq = 0.0;
    for (auto t : steps)
      for (std::size_t i = 0; i < plane; ++i) {
        double v = var.values[t * plane + i];
        if (logt) v = std::log1p(v);
        sq += (v - mu) * (v - mu);
      }
    stats.drivers.push_back(var.name);
    stats.mean.push_back(mu);
    stats.stddev.push_back(std::sqrt(sq / n));
  }

  for (const auto& series : cube.indices) {
    std::vector<double> vals;
    for (std::size_t m = 0; m < series.values.size(); ++m) {
      const int year = cal.index_start_year + (cal.index_start_month - 1 + static_cast<int>(m)) / 12;
      if (split.train.contains(year)) vals.push_back(series.values[m]);
    }
    if (vals.empty()) throw DataError("index '" + series.name + "' has no training-year months");
    double mu = 0.0;
    for (double v : vals) mu += v;
    mu /= static_cast<double>(vals.size());
    double sq = 0.0;
    for (double v : vals) sq += (v - mu) * (v - mu);
    stats.indices.push_back(series.name);
    stats.index_stddev.push_back(std::sqrt(sq / static_cast<double>(vals.size())));
  }
  return stats;
}

DataCube preprocess(const DataCube& cube, const SplitStats& stats) {
  if (cube.preprocessing.preprocessed) throw ContractError("cube is already preprocessed");
  cube.validate();
  if (stats.drivers.size() != cube.drivers.size() || stats.indices.size() != cube.indices.size())
    throw DataError("split statistics do not match the cube's variables");

  DataCube out = cube;
  const std::size_t plane = cube.plane();
  for (std::size_t v = 0; v < out.drivers.size(); ++v) {
    auto& var = out.drivers[v];
    if (stats.drivers[v] != var.name) throw DataError("split statistics out of order at '" + var.name + "'");
    if (!(stats.stddev[v] > 0.0)) throw DegenerateVariableError("driver '" + var.name + "' has zero variance");
    const bool logt = log_transformed(cube, var.name);
    const double mu = stats.mean[v], inv_sd = 1.0 / stats.stddev[v];
    for (auto& x : var.values) {
      const double y = logt ? log1p_checked(x, var.name) : x;
      x = (y - mu) * inv_sd;
    }
    var.f32 = false;
  }

  const auto& names = positional_channel_names();
  std::vector<GridVariable> pos(4);
  for (std::size_t k = 0; k < 4; ++k) {
    pos[k].name = names[k];
    pos[k].f32 = false;
    pos[k].values.resize(cube.n_steps() * plane);
  }
  for (std::size_t y = 0; y < cube.grid.n_lat; ++y)
    for (std::size_t x = 0; x < cube.grid.n_lon; ++x) {
      const auto enc = positional_encoding(cube.grid.lat_center(y), cube.grid.lon_center(x));
      for (std::size_t t = 0; t < cube.n_steps(); ++t)
        for (std::size_t k = 0; k < 4; ++k) pos[k].values[t * plane + y * cube.grid.n_lon + x] = enc[k];
    }
  for (auto& p : pos) out.drivers.push_back(std::move(p));

  for (std::size_t k = 0; k < out.indices.size(); ++k) {
    auto& s = out.indices[k];
    if (stats.indices[k] != s.name) throw DataError("split statistics out of order at '" + s.name + "'");
    if (!(stats.index_stddev[k] > 0.0)) throw DegenerateVariableError("index '" + s.name + "' has zero variance");
    for (auto& v : s.values) v /= stats.index_stddev[k];
    s.f32 = false;
  }

  binarize_target(out);
  out.preprocessing.preprocessed = true;
  out.provenance["split_stats"] = stats;
  return out;
}

DataCube coarsen(const DataCube& cube, std::size_t factor) {
  if (factor == 0 || cube.grid.n_lat % factor != 0 || cube.grid.n_lon % factor != 0)
    throw ConfigError("coarsen: grid " + std::to_string(cube.grid.n_lat) + "x" +
                      std::to_string(cube.grid.n_lon) + " not divisible by factor " + std::to_string(factor));
  DataCube out;
  out.grid = cube.grid;
  out.grid.n_lat /= factor;
  out.grid.n_lon /= factor;
  out.calendar = cube.calendar;
  out.indices = cube.indices;
  out.preprocessing = cube.preprocessing;
  out.provenance = cube.provenance;
  out.provenance["coarsened_by"] = factor * (cube.provenance.contains("coarsened_by")
                                                 ? cube.provenance["coarsened_by"].get<std::size_t>()
                                                 : 1);

  const std::size_t nlat = cube.grid.n_lat, nlon = cube.grid.n_lon;
  const std::size_t clat = out.grid.n_lat, clon = out.grid.n_lon;
  const double inv = 1.0 / static_cast<double>(factor * factor);
  auto block_mean = [&](const std::vector<double>& src, std::size_t steps) {
    std::vector<double> dst(steps * clat * clon);
    for (std::size_t t = 0; t < steps; ++t)
      for (std::size_t y = 0; y < clat; ++y)
        for (std::size_t x = 0; x < clon; ++x) {
          double total = 0.0;
          for (std::size_t dy = 0; dy < factor; ++dy) {
            const double* row = src.data() + (t * nlat + y * factor + dy) * nlon + x * factor;
            for (std::size_t dx = 0; dx < factor; ++dx) total += row[dx];
          }
          dst[(t * clat + y) * clon + x] = total * inv;
        }
    return dst;
  };
  for (const auto& var : cube.drivers)
    out.drivers.push_back({var.name, block_mean(var.values, cube.n_steps()), false});
  if (!cube.land_mask.empty()) {
    out.land_mask = block_mean(cube.land_mask, 1);
    for (auto& v : out.land_mask) v = v >= 0.5 ? 1.0 : 0.0;
  }
  return out;
}

}  // namespace televit
