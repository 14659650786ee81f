// SPDX-License-Identifier: Apache-2.0
#include <algorithm>

#include "televit/datacube.hpp"
#include "televit/errors.hpp"
#include "televit/parallel.hpp"

namespace televit {

namespace {

Tensor grid_stack(const DataCube& cube, std::size_t t, std::size_t row0, std::size_t col0,
                  std::size_t rows, std::size_t cols) {
  const std::size_t nlon = cube.grid.n_lon, plane = cube.plane();
  std::vector<double> out(cube.drivers.size() * rows * cols);
  std::size_t k = 0;
  for (const auto& var : cube.drivers)
    for (std::size_t y = 0; y < rows; ++y) {
      const double* src = var.values.data() + t * plane + (row0 + y) * nlon + col0;
      for (std::size_t x = 0; x < cols; ++x) out[k++] = src[x];
    }
  return Tensor(Shape{cube.drivers.size(), rows, cols}, std::move(out));
}

void check_inputs(const DataCube& fine, const DataCube& coarse, std::size_t horizon, std::size_t p) {
  if (!fine.target) throw DataError("fine cube has no burned-area target");
  if (!fine.preprocessing.preprocessed || !coarse.preprocessing.preprocessed)
    throw DataError("samples need preprocessed cubes");
  if (horizon == 0) throw ConfigError("horizon must be >= 1");
  if (p == 0 || fine.grid.n_lat % p != 0 || fine.grid.n_lon % p != 0)
    throw ConfigError("fine grid " + std::to_string(fine.grid.n_lat) + "x" +
                      std::to_string(fine.grid.n_lon) + " not divisible by patch " + std::to_string(p));
  if (coarse.n_steps() != fine.n_steps()) throw DataError("fine and coarse cubes differ in length");
  if (fine.indices.empty()) throw DataError("cube has no climate indices");
}

bool has_history(const Calendar& cal, std::size_t t, std::size_t hist) {
  const long mi = cal.month_index(t);
  return mi >= static_cast<long>(hist) && mi <= static_cast<long>(cal.n_months);
}

// All patches at t; empty-target patches are counted in `dropped` when dropping.
std::vector<Sample> step_samples(const DataCube& fine, const DataCube& coarse, std::size_t t,
                                 std::size_t horizon, const SampleOptions& options, std::size_t& dropped) {
  const auto& cal = fine.calendar;
  const std::size_t p = options.patch, hist = options.history_months;
  const std::size_t rows = fine.grid.n_lat / p, cols = fine.grid.n_lon / p;
  const std::size_t plane = fine.plane();
  const auto mi = static_cast<std::size_t>(cal.month_index(t));
  std::vector<double> idx;
  idx.reserve(fine.indices.size() * hist);
  for (const auto& s : fine.indices)
    for (std::size_t k = 0; k < hist; ++k) idx.push_back(s.values[mi - hist + k]);
  const Tensor x_i(Shape{fine.indices.size(), hist}, std::move(idx));
  const Tensor x_g = grid_stack(coarse, t, 0, 0, coarse.grid.n_lat, coarse.grid.n_lon);
  const std::size_t tt = t + horizon;
  std::vector<Sample> out;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t q = 0; q < cols; ++q) {
      std::vector<double> tgt(p * p);
      bool any = false;
      for (std::size_t y = 0; y < p; ++y)
        for (std::size_t x = 0; x < p; ++x) {
          const double v = fine.target->values[tt * plane + (r * p + y) * fine.grid.n_lon + q * p + x];
          tgt[y * p + x] = v;
          any = any || v > 0.0;
        }
      if (!any && options.drop_empty) {
        ++dropped;
        continue;
      }
      Sample s;
      s.x_l = grid_stack(fine, t, r * p, q * p, p, p);
      s.x_g = x_g;
      s.x_i = x_i;
      s.target = Tensor(Shape{1, p, p}, std::move(tgt));
      s.t = t;
      s.h = horizon;
      s.lat_origin = r * p;
      s.lon_origin = q * p;
      s.patch_index = r * cols + q;
      out.push_back(std::move(s));
    }
  return out;
}

struct StepSamples {
  std::vector<Sample> samples;
  std::optional<Split> split;
  bool skipped_history = false;
  std::size_t dropped = 0;
};

}  // namespace

SampleSets build_samples(const DataCube& fine, const DataCube& coarse, std::size_t horizon,
                         const SplitSpec& split, const SampleOptions& options) {
  split.validate();
  check_inputs(fine, coarse, horizon, options.patch);
  const auto& cal = fine.calendar;
  const std::size_t steps = cal.n_steps > horizon ? cal.n_steps - horizon : 0;

  std::vector<StepSamples> per_step(steps);
  parallel_for(steps, [&](std::size_t t) {
    auto& out = per_step[t];
    out.split = split.split_of(cal.year_of(t));
    if (!out.split) return;
    if (!has_history(cal, t, options.history_months)) {
      out.skipped_history = true;
      return;
    }
    out.samples = step_samples(fine, coarse, t, horizon, options, out.dropped);
  });

  SampleSets sets;
  for (auto& step : per_step) {
    if (step.skipped_history) ++sets.skipped_history;
    sets.dropped_empty += step.dropped;
    if (!step.split) continue;
    auto& dst = *step.split == Split::train ? sets.train : *step.split == Split::val ? sets.val : sets.test;
    for (auto& s : step.samples) dst.push_back(std::move(s));
  }
  return sets;
}

std::vector<Sample> samples_at(const DataCube& fine, const DataCube& coarse, std::size_t t, std::size_t horizon,
                               const SampleOptions& options) {
  check_inputs(fine, coarse, horizon, options.patch);
  if (t + horizon >= fine.n_steps())
    throw DataError("timestep " + std::to_string(t) + " + horizon " + std::to_string(horizon) +
                    " is past the cube end (" + std::to_string(fine.n_steps()) + " steps)");
  if (!has_history(fine.calendar, t, options.history_months))
    throw DataError("timestep " + std::to_string(t) + " lacks " + std::to_string(options.history_months) +
                    " months of index history");
  SampleOptions keep = options;
  keep.drop_empty = false;
  std::size_t dropped = 0;
  return step_samples(fine, coarse, t, horizon, keep, dropped);
}

Climatology seasonal_cycle_baseline(const DataCube& cube, const SplitSpec& split) {
  if (!cube.target) throw DataError("cube has no burned-area target");
  const auto& cal = cube.calendar;
  Climatology clim;
  clim.steps_per_year = cal.steps_per_year;
  clim.n_lat = cube.grid.n_lat;
  clim.n_lon = cube.grid.n_lon;
  const std::size_t plane = cube.plane();
  clim.values.assign(cal.steps_per_year * plane, 0.0);
  std::vector<std::size_t> counts(cal.steps_per_year, 0);
  for (std::size_t t = 0; t < cal.n_steps; ++t) {
    if (!split.train.contains(cal.year_of(t))) continue;
    const std::size_t slot = cal.slot_of(t);
    ++counts[slot];
    for (std::size_t i = 0; i < plane; ++i)
      clim.values[slot * plane + i] += cube.target->values[t * plane + i] > 0.0 ? 1.0 : 0.0;
  }
  bool any = false;
  for (std::size_t slot = 0; slot < cal.steps_per_year; ++slot) {
    if (counts[slot] == 0) continue;
    any = true;
    for (std::size_t i = 0; i < plane; ++i) clim.values[slot * plane + i] /= static_cast<double>(counts[slot]);
  }
  if (!any) throw DataError("seasonal baseline needs at least one training year in the cube");
  return clim;
}

}  // namespace televit
