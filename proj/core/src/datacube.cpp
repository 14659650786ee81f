// SPDX-License-Identifier: Apache-2.0
#include "televit/datacube.hpp"

#include <cmath>
#include <numbers>

#include "televit/errors.hpp"
#include "json_keys.hpp"

namespace televit {

double GridMeta::lat_center(std::size_t row) const {
  const double step = (lat_max - lat_min) / static_cast<double>(n_lat);
  return lat_max - (static_cast<double>(row) + 0.5) * step;
}

double GridMeta::lon_center(std::size_t col) const {
  const double step = (lon_max - lon_min) / static_cast<double>(n_lon);
  return lon_min + (static_cast<double>(col) + 0.5) * step;
}

namespace {

bool is_leap(int year) { return (year % 4 == 0 && year % 100 != 0) || year % 400 == 0; }

}  // namespace

int Calendar::year_of(std::size_t step) const {
  return start_year + static_cast<int>(step / steps_per_year);
}

int Calendar::month_of(std::size_t step) const {
  static constexpr int kDays[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  const int year = year_of(step);
  int day = static_cast<int>(slot_of(step) * step_days);
  for (int m = 0; m < 12; ++m) {
    const int len = kDays[m] + (m == 1 && is_leap(year) ? 1 : 0);
    if (day < len) return m + 1;
    day -= len;
  }
  return 12;
}

long Calendar::month_index(std::size_t step) const {
  return static_cast<long>(year_of(step) - index_start_year) * 12 +
         static_cast<long>(month_of(step) - index_start_month);
}

const GridVariable& DataCube::driver(const std::string& name) const {
  for (const auto& v : drivers)
    if (v.name == name) return v;
  throw DataError("cube has no driver '" + name + "'");
}

const IndexSeries& DataCube::index(const std::string& name) const {
  for (const auto& s : indices)
    if (s.name == name) return s;
  throw DataError("cube has no index '" + name + "'");
}

bool DataCube::is_land(std::size_t row, std::size_t col) const {
  return land_mask.empty() || land_mask[row * grid.n_lon + col] > 0.5;
}

void DataCube::validate() const {
  if (grid.n_lat == 0 || grid.n_lon == 0 || calendar.n_steps == 0)
    throw DataError("cube has empty dimensions");
  if (calendar.steps_per_year == 0) throw DataError("steps_per_year must be positive");
  const std::size_t expected = calendar.n_steps * plane();
  for (const auto& v : drivers)
    if (v.values.size() != expected)
      throw DataError("driver '" + v.name + "' has " + std::to_string(v.values.size()) +
                      " values, expected " + std::to_string(expected));
  if (target) {
    if (target->values.size() != expected) throw DataError("target grid shape differs from drivers");
    if (preprocessing.preprocessed)
      for (double v : target->values)
        if (v != 0.0 && v != 1.0) throw DataError("target is not binary");
  }
  for (const auto& s : indices)
    if (s.values.size() != calendar.n_months)
      throw DataError("index '" + s.name + "' has " + std::to_string(s.values.size()) +
                      " months, expected " + std::to_string(calendar.n_months));
  if (!land_mask.empty() && land_mask.size() != plane()) throw DataError("land mask shape mismatch");
}

const std::vector<std::string>& default_driver_names() {
  static const std::vector<std::string> names = {
      "mslp", "total_precipitation", "vpd", "sst", "t2m_mean",
      "ssrd", "swvl1", "lst_day", "ndvi", "population_density"};
  return names;
}

const std::vector<std::string>& default_index_names() {
  static const std::vector<std::string> names = {
      "wp", "pna", "nao", "soi", "gmst", "pdo", "ea_wr", "epo_np", "nino34", "bests"};
  return names;
}

const std::vector<std::string>& positional_channel_names() {
  static const std::vector<std::string> names = {"cos_lon", "sin_lon", "cos_lat", "sin_lat"};
  return names;
}

std::array<double, 4> positional_encoding(double lat_deg, double lon_deg) {
  const double lat = lat_deg * std::numbers::pi / 180.0;
  const double lon = lon_deg * std::numbers::pi / 180.0;
  return {std::cos(lon), std::sin(lon), std::cos(lat), std::sin(lat)};
}

// ---------------------------------------------------------------------------

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "val" || name == "validation") return Split::val;
  if (name == "test") return Split::test;
  throw ConfigError("unknown split '" + name + "'");
}

void SplitSpec::validate() const {
  for (const auto* r : {&train, &val, &test})
    if (r->first > r->last) throw ConfigError("split year range is reversed");
  if (!(train.last < val.first && val.last < test.first))
    throw ConfigError("splits must be disjoint and ordered train < val < test");
}

std::optional<Split> SplitSpec::split_of(int year) const {
  if (train.contains(year)) return Split::train;
  if (val.contains(year)) return Split::val;
  if (test.contains(year)) return Split::test;
  return std::nullopt;
}

void to_json(nlohmann::json& j, const SplitSpec& s) {
  j = {{"train", {s.train.first, s.train.last}},
       {"val", {s.val.first, s.val.last}},
       {"test", {s.test.first, s.test.last}}};
}

void from_json(const nlohmann::json& j, SplitSpec& s) {
  detail::require_known_keys(j, SplitSpec{}, "split config");
  auto range = [&](const char* key, YearRange& r) {
    if (!j.contains(key)) return;
    const auto& a = j.at(key);
    if (!a.is_array() || a.size() != 2) throw ConfigError(std::string("split '") + key + "' must be [first, last]");
    r.first = a[0].get<int>();
    r.last = a[1].get<int>();
  };
  range("train", s.train);
  range("val", s.val);
  range("test", s.test);
}

void binarize_target(DataCube& cube) {
  if (!cube.target) return;
  for (auto& v : cube.target->values) v = v > 0.0 ? 1.0 : 0.0;
}

const std::vector<Sample>& SampleSets::of(Split s) const {
  switch (s) {
    case Split::train: return train;
    case Split::val: return val;
    case Split::test: return test;
  }
  return test;
}

}  // namespace televit
