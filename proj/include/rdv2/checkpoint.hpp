#pragma once

// Binary tensor container, little-endian throughout:
//   "RDV2" | u32 version (1) | u32 count |
//   count x { u16 name length | name bytes | u8 dtype (0 = f32, 1 = f64) |
//             u8 ndim | u32 dims[ndim] | raw elements } |
//   u32 CRC-32 of every preceding byte

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "rdv2/tensor.hpp"

namespace rdv2::ckpt {

inline constexpr std::uint32_t kVersion = 1;

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

std::vector<std::uint8_t> encode(const NamedTensors& tensors);
/// Throws CorruptFileError naming the failing field (magic, version, crc,
/// dtype, name, truncated data, trailing bytes).
NamedTensors decode(const std::vector<std::uint8_t>& bytes);

/// Writes through a temporary file and renames it into place.
void write_file(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors read_file(const std::filesystem::path& path);

std::uint32_t crc32(const std::uint8_t* data, std::size_t size);

}  // namespace rdv2::ckpt
