// SPDX-License-Identifier: Apache-2.0
#include "televit/byte_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "televit/errors.hpp"

namespace televit {

namespace {

template <typename U>
U to_le(U v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    U out = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) out = (out << 8) | ((v >> (8 * i)) & 0xFF);
    return out;
  }
}

constexpr std::size_t kChunk = 4096;

}  // namespace

void write_u64_le(std::ostream& out, std::uint64_t value) {
  const std::uint64_t le = to_le(value);
  out.write(reinterpret_cast<const char*>(&le), sizeof le);
}

std::uint64_t read_u64_le(std::istream& in) {
  std::uint64_t le = 0;
  in.read(reinterpret_cast<char*>(&le), sizeof le);
  return to_le(le);
}

void write_f64_le(std::ostream& out, std::span<const double> values) {
  std::vector<std::uint64_t> buf;
  buf.reserve(kChunk);
  for (std::size_t i = 0; i < values.size(); i += kChunk) {
    buf.clear();
    for (std::size_t j = i; j < std::min(values.size(), i + kChunk); ++j)
      buf.push_back(to_le(std::bit_cast<std::uint64_t>(values[j])));
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(std::uint64_t)));
  }
}

void read_f64_le(std::istream& in, std::span<double> values) {
  std::vector<std::uint64_t> buf(kChunk);
  for (std::size_t i = 0; i < values.size(); i += kChunk) {
    const std::size_t n = std::min(kChunk, values.size() - i);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * sizeof(std::uint64_t)));
    for (std::size_t j = 0; j < n; ++j) values[i + j] = std::bit_cast<double>(to_le(buf[j]));
  }
}

void write_f32_le(std::ostream& out, std::span<const double> values) {
  std::vector<std::uint32_t> buf;
  buf.reserve(kChunk);
  for (std::size_t i = 0; i < values.size(); i += kChunk) {
    buf.clear();
    for (std::size_t j = i; j < std::min(values.size(), i + kChunk); ++j)
      buf.push_back(to_le(std::bit_cast<std::uint32_t>(static_cast<float>(values[j]))));
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(std::uint32_t)));
  }
}

void read_f32_le(std::istream& in, std::span<double> values) {
  std::vector<std::uint32_t> buf(kChunk);
  for (std::size_t i = 0; i < values.size(); i += kChunk) {
    const std::size_t n = std::min(kChunk, values.size() - i);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * sizeof(std::uint32_t)));
    for (std::size_t j = 0; j < n; ++j) values[i + j] = std::bit_cast<float>(to_le(buf[j]));
  }
}

void write_array_file(const std::filesystem::path& path, std::span<const double> values, bool as_f32) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  if (as_f32)
    write_f32_le(out, values);
  else
    write_f64_le(out, values);
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<double> read_array_file(const std::filesystem::path& path, std::size_t count, bool as_f32) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec) throw IoError("cannot stat " + path.string());
  const std::size_t expected = count * (as_f32 ? 4 : 8);
  if (size != expected)
    throw DataError(path.string() + " holds " + std::to_string(size) + " bytes, expected " +
                    std::to_string(expected));
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<double> values(count);
  if (as_f32)
    read_f32_le(in, values);
  else
    read_f64_le(in, values);
  if (!in) throw IoError("failed reading " + path.string());
  return values;
}

}  // namespace televit
