// SPDX-License-Identifier: Apache-2.0
//
// In-memory datacube: named driver grids over (time, lat, lon), a binary
// burned-area target, monthly climate index series, and the metadata that
// ties grid cells and 8-day steps to coordinates and calendar months.
//
// Grids are row-major [time][lat][lon]; lat row 0 is the northernmost row.
// Values are held as double; each variable records whether it originated as
// f32 so that manifests round-trip bit-exactly.
#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "televit/sample.hpp"

namespace televit {

struct GridVariable {
  std::string name;
  std::vector<double> values;  // [n_steps * n_lat * n_lon]
  bool f32 = true;
};

struct IndexSeries {
  std::string name;
  std::vector<double> values;  // [n_months]
  bool f32 = true;
};

struct GridMeta {
  std::size_t n_lat = 0, n_lon = 0;
  double lat_min = -90.0, lat_max = 90.0;  // edges, degrees
  double lon_min = -180.0, lon_max = 180.0;

  std::size_t cells() const { return n_lat * n_lon; }
  double lat_center(std::size_t row) const;
  double lon_center(std::size_t col) const;
};

/// 8-day calendar: each year holds `steps_per_year` steps starting on Jan 1,
/// step s of a year begins on day-of-year 8*s. Index series are monthly and
/// start at (index_start_year, index_start_month).
struct Calendar {
  int start_year = 2001;
  std::size_t steps_per_year = 46;
  std::size_t step_days = 8;
  std::size_t n_steps = 0;
  int index_start_year = 2000;
  int index_start_month = 3;  // 1..12
  std::size_t n_months = 0;

  int year_of(std::size_t step) const;
  std::size_t slot_of(std::size_t step) const { return step % steps_per_year; }
  /// Calendar month (1..12) containing the first day of a step.
  int month_of(std::size_t step) const;
  /// Position of the step's month in the index series (may be negative).
  long month_index(std::size_t step) const;
};

struct Preprocessing {
  bool preprocessed = false;
  std::vector<std::string> log_transform = {"total_precipitation", "population_density"};
};

struct DataCube {
  GridMeta grid;
  Calendar calendar;
  std::vector<GridVariable> drivers;  // includes positional channels once preprocessed
  std::optional<GridVariable> target;  // binary burned area
  std::vector<IndexSeries> indices;
  std::vector<double> land_mask;  // [n_lat * n_lon], 1 = land; empty means all land
  Preprocessing preprocessing;
  nlohmann::json provenance = nlohmann::json::object();

  std::size_t n_steps() const { return calendar.n_steps; }
  std::size_t plane() const { return grid.cells(); }
  const GridVariable& driver(const std::string& name) const;
  const IndexSeries& index(const std::string& name) const;
  bool is_land(std::size_t row, std::size_t col) const;

  /// Checks shapes and target binarity; throws DataError.
  void validate() const;
};

/// Names of the ten fire-driver variables, in channel order.
const std::vector<std::string>& default_driver_names();
/// Names of the ten climate indices, in channel order.
const std::vector<std::string>& default_index_names();
/// Appended by preprocess: cos lon, sin lon, cos lat, sin lat.
const std::vector<std::string>& positional_channel_names();

/// (cos lon, sin lon, cos lat, sin lat) of a point in degrees.
std::array<double, 4> positional_encoding(double lat_deg, double lon_deg);

// ---------------------------------------------------------------------------
// Splits

enum class Split { train, val, test };
std::string to_string(Split s);
Split parse_split(const std::string& name);

struct YearRange {
  int first = 0, last = 0;  // inclusive
  bool contains(int year) const { return year >= first && year <= last; }
};

struct SplitSpec {
  YearRange train{2002, 2017}, val{2018, 2018}, test{2019, 2019};

  /// Disjoint and ordered train < val < test; throws ConfigError.
  void validate() const;
  std::optional<Split> split_of(int year) const;
};

void to_json(nlohmann::json& j, const SplitSpec& s);
void from_json(const nlohmann::json& j, SplitSpec& s);

// ---------------------------------------------------------------------------
// Synthetic generation

struct GeneratorConfig {
  std::size_t n_lat = 32, n_lon = 64;
  int start_year = 2001;
  std::size_t n_years = 6;
  std::size_t steps_per_year = 46;
  std::size_t patch = 16;          // grid must tile into patches
  std::size_t coarsen_factor = 4;  // grid must coarsen evenly
  std::vector<std::string> drivers = default_driver_names();
  std::vector<std::string> indices = default_index_names();
  double land_fraction = 0.75;
  std::size_t spatial_modes = 6;  // smooth-field Fourier modes per driver
  double anomaly_persistence = 0.9;  // per-step AR(1) of driver anomalies
  double index_persistence_min = 0.6, index_persistence_max = 0.9;  // per-month AR(1)

  double burn_bias = -3.0;
  double local_strength = 1.0;    // weight of local drivers in the burn logit
  /// The index that drives burned area, its weight in the logit and its lag.
  std::string teleconnection_index = "nino34";
  double teleconnection_strength = 0.0;
  int teleconnection_lag_months = 3;
  /// Radius of the Gaussian footprint as a fraction of the lon extent; 0 = everywhere.
  double footprint_radius = 0.0;
};

void to_json(nlohmann::json& j, const GeneratorConfig& c);
void from_json(const nlohmann::json& j, GeneratorConfig& c);

/// Deterministic per (config, seed). Throws ConfigError on bad dimensions.
DataCube generate_synthetic_cube(const GeneratorConfig& config, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Preprocessing and coarsening

struct SplitStats {
  std::vector<std::string> drivers;
  std::vector<double> mean, stddev;  // after the log transform
  std::vector<std::string> indices;
  std::vector<double> index_stddev;
};

void to_json(nlohmann::json& j, const SplitStats& s);

/// Statistics over the steps (drivers) and months (indices) of the training years.
SplitStats compute_split_stats(const DataCube& cube, const SplitSpec& split);

/// log1p on designated drivers, z-score drivers, append positional channels,
/// scale indices by their std, binarize the target. Refuses to run twice.
DataCube preprocess(const DataCube& cube, const SplitStats& stats);

/// Block-mean every driver over factor x factor cells. The target is dropped.
DataCube coarsen(const DataCube& cube, std::size_t factor);

/// Any positive value becomes 1.
void binarize_target(DataCube& cube);

// ---------------------------------------------------------------------------
// Samples

struct SampleOptions {
  std::size_t patch = 80;
  std::size_t history_months = 10;
  bool drop_empty = true;
};

struct SampleSets {
  std::vector<Sample> train, val, test;
  std::size_t skipped_history = 0;  // timesteps lacking index history
  std::size_t dropped_empty = 0;    // patches with no burned pixel

  const std::vector<Sample>& of(Split s) const;
};

/// Samples of one horizon from preprocessed fine and coarse cubes, ordered by
/// (t, patch index) and assigned to splits by the year of t.
SampleSets build_samples(const DataCube& fine, const DataCube& coarse, std::size_t horizon,
                         const SplitSpec& split, const SampleOptions& options = {});

/// Every patch at timestep t in patch order, empty targets included, regardless
/// of split. Throws DataError when t lacks history or t + horizon is past the end.
std::vector<Sample> samples_at(const DataCube& fine, const DataCube& coarse, std::size_t t, std::size_t horizon,
                               const SampleOptions& options = {});

/// Per-slot, per-cell training mean of the binary target.
struct Climatology {
  std::size_t steps_per_year = 0, n_lat = 0, n_lon = 0;
  std::vector<double> values;  // [slot][lat][lon]

  double at(std::size_t slot, std::size_t row, std::size_t col) const {
    return values[(slot * n_lat + row) * n_lon + col];
  }
};

Climatology seasonal_cycle_baseline(const DataCube& cube, const SplitSpec& split);

// ---------------------------------------------------------------------------
// Manifest I/O

/// Writes manifest.json plus one raw little-endian file per array.
void save_cube(const std::filesystem::path& dir, const DataCube& cube);
DataCube load_cube(const std::filesystem::path& dir);

/// Problems found in a manifest document; empty when valid.
std::vector<std::string> validate_cube_manifest(const nlohmann::json& manifest);

}  // namespace televit
