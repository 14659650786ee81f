// SPDX-License-Identifier: Apache-2.0
//
// Cube manifest directory:
//   manifest.json           metadata, one entry per array
//   <role>.<name>.<dtype>   raw little-endian row-major values
// dtype is "f32" or "f64"; role is driver, target, index or mask.
#include <fstream>
#include <set>

#include "televit/byte_io.hpp"
#include "televit/datacube.hpp"
#include "televit/errors.hpp"

namespace televit {

namespace fs = std::filesystem;

namespace {

constexpr const char* kFormat = "televit-cube";
constexpr int kVersion = 1;

std::string file_name(const std::string& role, const std::string& name, bool f32) {
  return role + "." + name + (f32 ? ".f32" : ".f64");
}

nlohmann::json array_entry(const std::string& role, const std::string& name, bool f32,
                           const std::vector<std::size_t>& shape) {
  return {{"name", name}, {"role", role}, {"file", file_name(role, name, f32)},
          {"dtype", f32 ? "f32" : "f64"}, {"shape", shape}};
}

}  // namespace

void save_cube(const fs::path& dir, const DataCube& cube) {
  cube.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  const auto& g = cube.grid;
  const auto& c = cube.calendar;
  const std::vector<std::size_t> grid_shape{c.n_steps, g.n_lat, g.n_lon};
  nlohmann::json m;
  m["format"] = kFormat;
  m["version"] = kVersion;
  m["grid"] = {{"n_lat", g.n_lat}, {"n_lon", g.n_lon}, {"lat_min", g.lat_min},
               {"lat_max", g.lat_max}, {"lon_min", g.lon_min}, {"lon_max", g.lon_max},
               {"order", "time,lat,lon"}, {"lat_row0", "north"}};
  m["calendar"] = {{"start_year", c.start_year}, {"steps_per_year", c.steps_per_year},
                   {"step_days", c.step_days}, {"n_steps", c.n_steps},
                   {"index_start_year", c.index_start_year},
                   {"index_start_month", c.index_start_month}, {"n_months", c.n_months}};
  m["preprocessing"] = {{"preprocessed", cube.preprocessing.preprocessed},
                        {"log_transform", cube.preprocessing.log_transform}};
  m["provenance"] = cube.provenance;

  nlohmann::json vars = nlohmann::json::array();
  for (const auto& v : cube.drivers) {
    vars.push_back(array_entry("driver", v.name, v.f32, grid_shape));
    write_array_file(dir / file_name("driver", v.name, v.f32), v.values, v.f32);
  }
  if (cube.target) {
    const auto& v = *cube.target;
    vars.push_back(array_entry("target", v.name, v.f32, grid_shape));
    write_array_file(dir / file_name("target", v.name, v.f32), v.values, v.f32);
  }
  m["variables"] = vars;

  nlohmann::json idx = nlohmann::json::array();
  for (const auto& s : cube.indices) {
    idx.push_back(array_entry("index", s.name, s.f32, {c.n_months}));
    write_array_file(dir / file_name("index", s.name, s.f32), s.values, s.f32);
  }
  m["indices"] = idx;

  if (!cube.land_mask.empty()) {
    m["land_mask"] = array_entry("mask", "land", true, {g.n_lat, g.n_lon});
    write_array_file(dir / file_name("mask", "land", true), cube.land_mask, true);
  } else {
    m["land_mask"] = nullptr;
  }

  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << m.dump(2) << '\n';
}

std::vector<std::string> validate_cube_manifest(const nlohmann::json& m) {
  std::vector<std::string> problems;
  auto need = [&](const nlohmann::json& obj, const char* key, auto pred, const char* what) {
    if (!obj.is_object() || !obj.contains(key) || !pred(obj.at(key)))
      problems.push_back(std::string("'") + key + "' must be " + what);
  };
  auto is_uint = [](const nlohmann::json& v) { return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0); };
  auto is_pos = [&](const nlohmann::json& v) { return is_uint(v) && v.get<long long>() > 0; };
  auto is_num = [](const nlohmann::json& v) { return v.is_number(); };
  auto is_int = [](const nlohmann::json& v) { return v.is_number_integer(); };
  auto is_str = [](const nlohmann::json& v) { return v.is_string(); };
  auto is_arr = [](const nlohmann::json& v) { return v.is_array(); };
  auto is_obj = [](const nlohmann::json& v) { return v.is_object(); };
  auto is_bool = [](const nlohmann::json& v) { return v.is_boolean(); };

  if (!m.is_object()) return {"manifest must be a JSON object"};
  need(m, "format", [](const auto& v) { return v == kFormat; }, "\"televit-cube\"");
  need(m, "version", [](const auto& v) { return v == kVersion; }, "1");
  need(m, "grid", is_obj, "an object");
  need(m, "calendar", is_obj, "an object");
  need(m, "variables", is_arr, "an array");
  need(m, "indices", is_arr, "an array");
  need(m, "preprocessing", is_obj, "an object");
  need(m, "provenance", is_obj, "an object");
  if (!problems.empty()) return problems;

  const auto& g = m["grid"];
  need(g, "n_lat", is_pos, "a positive integer");
  need(g, "n_lon", is_pos, "a positive integer");
  for (const char* k : {"lat_min", "lat_max", "lon_min", "lon_max"}) need(g, k, is_num, "a number");
  const auto& c = m["calendar"];
  need(c, "start_year", is_int, "an integer");
  need(c, "steps_per_year", is_pos, "a positive integer");
  need(c, "step_days", is_pos, "a positive integer");
  need(c, "n_steps", is_pos, "a positive integer");
  need(c, "index_start_year", is_int, "an integer");
  need(c, "index_start_month", [](const auto& v) { return v.is_number_integer() && v >= 1 && v <= 12; }, "1..12");
  need(c, "n_months", is_uint, "a non-negative integer");
  need(m["preprocessing"], "preprocessed", is_bool, "a boolean");
  need(m["preprocessing"], "log_transform", is_arr, "an array");
  if (!problems.empty()) return problems;

  const std::vector<std::size_t> grid_shape{c["n_steps"].get<std::size_t>(), g["n_lat"].get<std::size_t>(),
                                            g["n_lon"].get<std::size_t>()};
  std::set<std::string> names;
  std::size_t targets = 0;
  auto check_entry = [&](const nlohmann::json& e, const std::vector<std::size_t>& shape,
                         std::initializer_list<const char*> roles) {
    need(e, "name", is_str, "a string");
    need(e, "file", is_str, "a string");
    need(e, "dtype", [](const auto& v) { return v == "f32" || v == "f64"; }, "\"f32\" or \"f64\"");
    need(e, "role", [&](const auto& v) {
      for (const char* r : roles) if (v == r) return true;
      return false;
    }, "a valid role");
    if (!e.is_object() || !e.contains("shape") || e["shape"] != nlohmann::json(shape))
      problems.push_back("array '" + e.value("name", std::string("?")) + "' has the wrong shape");
  };
  for (const auto& e : m["variables"]) {
    check_entry(e, grid_shape, {"driver", "target"});
    if (e.is_object() && e.value("role", "") == "target") ++targets;
    if (e.is_object() && e.contains("name") && e["name"].is_string() &&
        !names.insert(e.value("role", "") + ":" + e["name"].get<std::string>()).second)
      problems.push_back("duplicate variable '" + e["name"].get<std::string>() + "'");
  }
  if (targets > 1) problems.push_back("at most one target variable is allowed");
  for (const auto& e : m["indices"]) check_entry(e, {c["n_months"].get<std::size_t>()}, {"index"});
  if (m.contains("land_mask") && !m["land_mask"].is_null())
    check_entry(m["land_mask"], {grid_shape[1], grid_shape[2]}, {"mask"});
  return problems;
}

DataCube load_cube(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad manifest " + path.string() + ": " + e.what());
  }
  if (const auto problems = validate_cube_manifest(m); !problems.empty()) {
    std::string msg = "invalid manifest " + path.string() + ":";
    for (const auto& p : problems) msg += "\n  " + p;
    throw DataError(msg);
  }

  DataCube cube;
  const auto& g = m["grid"];
  cube.grid.n_lat = g["n_lat"];
  cube.grid.n_lon = g["n_lon"];
  cube.grid.lat_min = g["lat_min"];
  cube.grid.lat_max = g["lat_max"];
  cube.grid.lon_min = g["lon_min"];
  cube.grid.lon_max = g["lon_max"];
  const auto& c = m["calendar"];
  cube.calendar.start_year = c["start_year"];
  cube.calendar.steps_per_year = c["steps_per_year"];
  cube.calendar.step_days = c["step_days"];
  cube.calendar.n_steps = c["n_steps"];
  cube.calendar.index_start_year = c["index_start_year"];
  cube.calendar.index_start_month = c["index_start_month"];
  cube.calendar.n_months = c["n_months"];
  cube.preprocessing.preprocessed = m["preprocessing"]["preprocessed"];
  cube.preprocessing.log_transform = m["preprocessing"]["log_transform"].get<std::vector<std::string>>();
  cube.provenance = m["provenance"];

  const std::size_t grid_count = cube.n_steps() * cube.plane();
  for (const auto& e : m["variables"]) {
    const bool f32 = e["dtype"] == "f32";
    GridVariable v{e["name"], read_array_file(dir / e["file"].get<std::string>(), grid_count, f32), f32};
    if (e["role"] == "target")
      cube.target = std::move(v);
    else
      cube.drivers.push_back(std::move(v));
  }
  for (const auto& e : m["indices"]) {
    const bool f32 = e["dtype"] == "f32";
    cube.indices.push_back(
        {e["name"], read_array_file(dir / e["file"].get<std::string>(), cube.calendar.n_months, f32), f32});
  }
  if (m.contains("land_mask") && !m["land_mask"].is_null()) {
    const auto& e = m["land_mask"];
    cube.land_mask = read_array_file(dir / e["file"].get<std::string>(), cube.plane(), e["dtype"] == "f32");
  }
  cube.validate();
  return cube;
}

}  // namespace televit
