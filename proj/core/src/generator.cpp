// SPDX-License-Identifier: Apache-2.0
//
// Synthetic wildfire cube. Every driver is a latent unit-scale field
//   latent = 0.6 base(y,x) + 0.8 amp(y,x) season(t,y) + 0.6 anomaly(t,y,x)
// where base and amp are smooth random fields, season follows the hemisphere,
// and anomaly is a sum of smooth modes with AR(1) coefficients in time. The
// stored value is a per-variable physical mapping of the latent. Burned area
// is Bernoulli with
//   logit = bias + local_strength * sum_v w_v latent_v + strength * footprint * z(month - lag)
// over land cells, where z is the unit-variance series behind the designated index.
#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "televit/datacube.hpp"
#include "televit/errors.hpp"
#include "json_keys.hpp"
#include "televit/rng.hpp"

namespace televit {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

enum Stream : std::uint64_t {
  kLand = 1,
  kFootprint = 2,
  kBurn = 3,
  kDriverBase = 100,
  kIndexBase = 1000,
};

// Sum of low-wavenumber cosines, standardized to zero mean and unit variance.
std::vector<double> smooth_field(std::size_t n_lat, std::size_t n_lon, std::size_t modes, Rng& rng) {
  std::vector<double> field(n_lat * n_lon, 0.0);
  for (std::size_t m = 0; m < modes; ++m) {
    const double kx = static_cast<double>(rng.below(4));
    const double ky = static_cast<double>(1 + rng.below(3));
    const double phase = rng.uniform(0.0, kTwoPi);
    const double amp = rng.uniform(0.5, 1.0);
    for (std::size_t y = 0; y < n_lat; ++y)
      for (std::size_t x = 0; x < n_lon; ++x)
        field[y * n_lon + x] += amp * std::cos(kTwoPi * kx * static_cast<double>(x) / static_cast<double>(n_lon) +
                                               std::numbers::pi * ky * static_cast<double>(y) / static_cast<double>(n_lat) +
                                               phase);
  }
  double mu = 0.0;
  for (double v : field) mu += v;
  mu /= static_cast<double>(field.size());
  double var = 0.0;
  for (double v : field) var += (v - mu) * (v - mu);
  const double sd = std::sqrt(var / static_cast<double>(field.size()));
  for (auto& v : field) v = sd > 0.0 ? (v - mu) / sd : 0.0;
  return field;
}

struct PhysicalMap {
  double offset, scale;
  bool exponential;  // value = offset * exp(scale * latent), non-negative
  bool seasonal;
  double burn_weight;
};

PhysicalMap physical_map(const std::string& name) {
  static const std::map<std::string, PhysicalMap> table = {
      {"mslp", {1013.0, 8.0, false, true, 0.0}},
      {"total_precipitation", {0.002, 1.0, true, true, -0.4}},
      {"vpd", {1.2, 0.6, false, true, 0.8}},
      {"sst", {290.0, 6.0, false, true, 0.0}},
      {"t2m_mean", {288.0, 10.0, false, true, 0.5}},
      {"ssrd", {1.5e7, 4e6, false, true, 0.2}},
      {"swvl1", {0.3, 0.08, false, true, -0.6}},
      {"lst_day", {295.0, 12.0, false, true, 0.3}},
      {"ndvi", {0.4, 0.15, false, true, 0.4}},
      {"population_density", {20.0, 1.5, true, false, -0.2}},
  };
  auto it = table.find(name);
  if (it != table.end()) return it->second;
  return {0.0, 1.0, false, true, 0.0};
}

void validate_config(const GeneratorConfig& c) {
  if (c.n_lat == 0 || c.n_lon == 0 || c.n_years == 0) throw ConfigError("generator: empty grid");
  if (c.steps_per_year == 0 || c.steps_per_year * 8 > 368)
    throw ConfigError("generator: steps_per_year must be in [1, 46]");
  if (c.patch == 0 || c.n_lat % c.patch != 0 || c.n_lon % c.patch != 0)
    throw ConfigError("generator: grid " + std::to_string(c.n_lat) + "x" + std::to_string(c.n_lon) +
                      " not divisible by patch " + std::to_string(c.patch));
  if (c.coarsen_factor == 0 || c.n_lat % c.coarsen_factor != 0 || c.n_lon % c.coarsen_factor != 0)
    throw ConfigError("generator: grid not divisible by coarsening factor " +
                      std::to_string(c.coarsen_factor));
  if (c.drivers.empty()) throw ConfigError("generator: no drivers");
  if (c.teleconnection_lag_months < 0 || c.teleconnection_lag_months > 10)
    throw ConfigError("generator: teleconnection lag must be in [0, 10] months");
  if (c.teleconnection_strength != 0.0 &&
      std::find(c.indices.begin(), c.indices.end(), c.teleconnection_index) == c.indices.end())
    throw ConfigError("generator: teleconnection index '" + c.teleconnection_index + "' not generated");
  if (c.land_fraction <= 0.0 || c.land_fraction > 1.0)
    throw ConfigError("generator: land_fraction must be in (0, 1]");
  if (c.index_persistence_min < 0.0 || c.index_persistence_max >= 1.0 ||
      c.index_persistence_min > c.index_persistence_max)
    throw ConfigError("generator: index persistence must satisfy 0 <= min <= max < 1");
  if (c.anomaly_persistence < 0.0 || c.anomaly_persistence >= 1.0)
    throw ConfigError("generator: anomaly persistence must be in [0, 1)");
}

double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

void to_json(nlohmann::json& j, const GeneratorConfig& c) {
  j = {{"n_lat", c.n_lat},
       {"n_lon", c.n_lon},
       {"start_year", c.start_year},
       {"n_years", c.n_years},
       {"steps_per_year", c.steps_per_year},
       {"patch", c.patch},
       {"coarsen_factor", c.coarsen_factor},
       {"drivers", c.drivers},
       {"indices", c.indices},
       {"land_fraction", c.land_fraction},
       {"spatial_modes", c.spatial_modes},
       {"anomaly_persistence", c.anomaly_persistence},
       {"index_persistence_min", c.index_persistence_min},
       {"index_persistence_max", c.index_persistence_max},
       {"burn_bias", c.burn_bias},
       {"local_strength", c.local_strength},
       {"teleconnection_index", c.teleconnection_index},
       {"teleconnection_strength", c.teleconnection_strength},
       {"teleconnection_lag_months", c.teleconnection_lag_months},
       {"footprint_radius", c.footprint_radius}};
}

void from_json(const nlohmann::json& j, GeneratorConfig& c) {
  detail::require_known_keys(j, GeneratorConfig{}, "generator config");
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("n_lat", c.n_lat);
    get("n_lon", c.n_lon);
    get("start_year", c.start_year);
    get("n_years", c.n_years);
    get("steps_per_year", c.steps_per_year);
    get("patch", c.patch);
    get("coarsen_factor", c.coarsen_factor);
    get("drivers", c.drivers);
    get("indices", c.indices);
    get("land_fraction", c.land_fraction);
    get("spatial_modes", c.spatial_modes);
    get("anomaly_persistence", c.anomaly_persistence);
    get("index_persistence_min", c.index_persistence_min);
    get("index_persistence_max", c.index_persistence_max);
    get("burn_bias", c.burn_bias);
    get("local_strength", c.local_strength);
    get("teleconnection_index", c.teleconnection_index);
    get("teleconnection_strength", c.teleconnection_strength);
    get("teleconnection_lag_months", c.teleconnection_lag_months);
    get("footprint_radius", c.footprint_radius);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("generator config: ") + e.what());
  }
}

DataCube generate_synthetic_cube(const GeneratorConfig& c, std::uint64_t seed) {
  validate_config(c);
  DataCube cube;
  cube.grid.n_lat = c.n_lat;
  cube.grid.n_lon = c.n_lon;
  auto& cal = cube.calendar;
  cal.start_year = c.start_year;
  cal.steps_per_year = c.steps_per_year;
  cal.n_steps = c.n_years * c.steps_per_year;
  cal.index_start_year = c.start_year - 1;
  cal.index_start_month = 3;  // ten lead months before Jan of the first year
  cal.n_months = c.n_years * 12 + 10;
  cube.provenance = {{"generator", "synthetic"}, {"seed", seed}, {"config", c}};

  const std::size_t plane = cube.plane();
  const std::size_t steps = cal.n_steps;

  // Land mask: threshold a smooth field at the requested quantile.
  {
    Rng rng(Rng::mix(seed, kLand));
    auto field = smooth_field(c.n_lat, c.n_lon, c.spatial_modes, rng);
    std::vector<double> sorted = field;
    std::sort(sorted.begin(), sorted.end());
    const auto cut_idx = static_cast<std::size_t>((1.0 - c.land_fraction) * static_cast<double>(plane));
    const double cut = cut_idx == 0 ? -INFINITY : sorted[std::min(cut_idx, plane - 1)];
    cube.land_mask.resize(plane);
    for (std::size_t i = 0; i < plane; ++i) cube.land_mask[i] = field[i] >= cut ? 1.0 : 0.0;
  }

  // Indices: AR(1) monthly with unit stationary variance, stored with a per-index scale.
  std::vector<double> driving_series;
  for (std::size_t k = 0; k < c.indices.size(); ++k) {
    Rng rng(Rng::mix(seed, kIndexBase + k));
    const double phi = rng.uniform(c.index_persistence_min, c.index_persistence_max);
    const double scale_k = rng.uniform(0.5, 2.0);
    const double innov = std::sqrt(1.0 - phi * phi);
    std::vector<double> unit(cal.n_months);
    double a = rng.normal();
    for (std::size_t m = 0; m < cal.n_months; ++m) {
      if (m > 0) a = phi * a + innov * rng.normal();
      unit[m] = a;
    }
    IndexSeries s{c.indices[k], std::vector<double>(cal.n_months), true};
    for (std::size_t m = 0; m < cal.n_months; ++m) s.values[m] = to_f32(scale_k * unit[m]);
    if (c.indices[k] == c.teleconnection_index) driving_series = unit;
    cube.indices.push_back(std::move(s));
  }

  // Drivers: keep the latent fields for the burn logit.
  std::vector<double> burn_latent(steps * plane, 0.0);
  double weight_norm = 0.0;
  for (std::size_t d = 0; d < c.drivers.size(); ++d) {
    const auto map = physical_map(c.drivers[d]);
    weight_norm += map.burn_weight * map.burn_weight;
  }
  weight_norm = weight_norm > 0.0 ? std::sqrt(weight_norm) : 1.0;

  const std::size_t n_modes = std::max<std::size_t>(1, c.spatial_modes);
  for (std::size_t d = 0; d < c.drivers.size(); ++d) {
    Rng rng(Rng::mix(seed, kDriverBase + d));
    const auto map = physical_map(c.drivers[d]);
    const auto base = smooth_field(c.n_lat, c.n_lon, c.spatial_modes, rng);
    auto amp = smooth_field(c.n_lat, c.n_lon, c.spatial_modes, rng);
    for (auto& v : amp) v = 0.6 + 0.4 * std::tanh(v);
    const double phase = rng.uniform(0.0, kTwoPi);
    std::vector<std::vector<double>> modes;
    for (std::size_t m = 0; m < n_modes; ++m)
      modes.push_back(smooth_field(c.n_lat, c.n_lon, 2, rng));
    std::vector<double> coef(n_modes);
    for (auto& v : coef) v = rng.normal();
    const double rho = c.anomaly_persistence;
    const double innov = std::sqrt(1.0 - rho * rho);
    const double mode_norm = 1.0 / std::sqrt(static_cast<double>(n_modes));

    GridVariable var{c.drivers[d], std::vector<double>(steps * plane), true};
    for (std::size_t t = 0; t < steps; ++t) {
      if (t > 0)
        for (auto& v : coef) v = rho * v + innov * rng.normal();
      const double season_angle =
          kTwoPi * static_cast<double>(cal.slot_of(t)) / static_cast<double>(c.steps_per_year) + phase;
      for (std::size_t y = 0; y < c.n_lat; ++y) {
        const double hemi = cube.grid.lat_center(y) >= 0.0 ? 0.0 : std::numbers::pi;
        const double season = map.seasonal ? std::sin(season_angle + hemi) : 0.0;
        for (std::size_t x = 0; x < c.n_lon; ++x) {
          const std::size_t cell = y * c.n_lon + x;
          double anomaly = 0.0;
          if (map.seasonal)
            for (std::size_t m = 0; m < n_modes; ++m) anomaly += coef[m] * modes[m][cell];
          const double latent = 0.6 * base[cell] + 0.8 * amp[cell] * season + 0.6 * mode_norm * anomaly;
          const double value =
              map.exponential ? map.offset * std::exp(map.scale * latent) : map.offset + map.scale * latent;
          var.values[t * plane + cell] = to_f32(value);
          burn_latent[t * plane + cell] += map.burn_weight / weight_norm * latent;
        }
      }
    }
    cube.drivers.push_back(std::move(var));
  }

  // Footprint of the teleconnection.
  std::vector<double> footprint(plane, 1.0);
  if (c.footprint_radius > 0.0) {
    Rng rng(Rng::mix(seed, kFootprint));
    const double cy = rng.uniform(0.0, static_cast<double>(c.n_lat));
    const double cx = rng.uniform(0.0, static_cast<double>(c.n_lon));
    const double radius = c.footprint_radius * static_cast<double>(c.n_lon);
    for (std::size_t y = 0; y < c.n_lat; ++y)
      for (std::size_t x = 0; x < c.n_lon; ++x) {
        double dx = std::abs(static_cast<double>(x) + 0.5 - cx);
        dx = std::min(dx, static_cast<double>(c.n_lon) - dx);  // periodic in longitude
        const double dy = static_cast<double>(y) + 0.5 - cy;
        footprint[y * c.n_lon + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * radius * radius));
      }
  }

  GridVariable target{"burned_area", std::vector<double>(steps * plane, 0.0), true};
  Rng rng(Rng::mix(seed, kBurn));
  for (std::size_t t = 0; t < steps; ++t) {
    double tele = 0.0;
    if (c.teleconnection_strength != 0.0) {
      const long m = cal.month_index(t) - c.teleconnection_lag_months;
      tele = c.teleconnection_strength * driving_series.at(static_cast<std::size_t>(std::max(0L, m)));
    }
    for (std::size_t cell = 0; cell < plane; ++cell) {
      // Draws happen for every cell so sea cells do not shift the stream.
      const double u = rng.uniform();
      const double fraction = rng.uniform(0.01, 1.0);
      if (cube.land_mask[cell] < 0.5) continue;
      const double logit = c.burn_bias + c.local_strength * burn_latent[t * plane + cell] +
                           tele * footprint[cell];
      const double p = 1.0 / (1.0 + std::exp(-logit));
      if (u < p) target.values[t * plane + cell] = to_f32(fraction);
    }
  }
  cube.target = std::move(target);
  binarize_target(cube);
  return cube;
}

}  // namespace televit
