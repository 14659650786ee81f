// SPDX-License-Identifier: Apache-2.0
// Little-endian raw array I/O shared by checkpoints, cube manifests and maps.
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace televit {

void write_u64_le(std::ostream& out, std::uint64_t value);
std::uint64_t read_u64_le(std::istream& in);

void write_f64_le(std::ostream& out, std::span<const double> values);
void read_f64_le(std::istream& in, std::span<double> values);

/// Narrows each value to f32 before writing.
void write_f32_le(std::ostream& out, std::span<const double> values);
void read_f32_le(std::istream& in, std::span<double> values);

/// Whole-file helpers; throw IoError / DataError on failure or size mismatch.
void write_array_file(const std::filesystem::path& path, std::span<const double> values, bool as_f32);
std::vector<double> read_array_file(const std::filesystem::path& path, std::size_t count, bool as_f32);

}  // namespace televit
