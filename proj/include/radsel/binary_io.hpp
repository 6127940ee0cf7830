#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace radsel::io {

/// Writes values as little-endian float32.
void write_f32(const std::filesystem::path &path, std::span<const double> values);

/// Reads a little-endian float32 file; throws FormatError unless it holds
/// exactly `expected_count` values (pass SIZE_MAX to accept any count).
std::vector<double> read_f32(const std::filesystem::path &path, std::size_t expected_count);

std::string read_text(const std::filesystem::path &path);
void write_text(const std::filesystem::path &path, const std::string &text);

/// CRC-32 (zlib polynomial) of a file's bytes.
std::uint32_t file_crc32(const std::filesystem::path &path);

} // namespace radsel::io
