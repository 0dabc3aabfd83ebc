#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sti {

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temporary and renames it into place, so a failed
// write never leaves a partial file at `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

// 64-bit FNV-1a, hex encoded. Used for manifest digests and config digests.
std::string fnv1a_hex(std::string_view bytes);
std::string file_digest(const std::filesystem::path& path);

// Little-endian float32 packing regardless of host byte order.
void append_f32le(std::string& out, std::span<const double> values);
void append_f32le(std::string& out, std::span<const float> values);
std::vector<float> parse_f32le(std::string_view bytes);

std::string trim(std::string_view s);
std::vector<std::string> split_ws(std::string_view s);

}  // namespace sti
