#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "esaw/param_vector.hpp"

namespace esaw {

// Snapshot file layout (all little-endian):
//   "ESAW" | u16 format version | u16 flags | u64 d | d x f64 | u64 FNV-1a
// The checksum covers the d*8 payload bytes, so a truncated or bit-flipped
// file never parses successfully.
inline constexpr std::uint16_t kSnapshotVersion = 1;

std::vector<std::uint8_t> snapshot_encode(const ParameterVector& x);
ParameterVector snapshot_decode(std::span<const std::uint8_t> bytes);

// Writes are atomic: temp file in the same directory, then rename.
void snapshot_write(const ParameterVector& x, const std::filesystem::path& path);
ParameterVector snapshot_read(const std::filesystem::path& path);

// Generic file helpers shared by all artifact writers.
void atomic_write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void atomic_write_file(const std::filesystem::path& path, const std::string& text);
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

// FNV-1a over the whole file; used for config hashing.
std::uint64_t file_digest(const std::filesystem::path& path);

}  // namespace esaw
