#pragma once

#include <array>
#include <filesystem>
#include <optional>

#include "s2e/core.hpp"

namespace s2e {

// Binary chip layout (little-endian):
//   8 bytes  magic "S2ECHIP1"
//   u32      channels, height, width
//   u8       value range (0 unit_signed, 1 unit, 2 raw)
//   u8       has nodata mask
//   u16      reserved (0)
//   f32      channels * height * width samples, channel-major
//   u8       height * width mask bytes (only when has mask)
// The sidecar "<file>.json" holds modality, value range and geo metadata.
inline constexpr std::array<char, 8> kChipMagic = {'S', '2', 'E', 'C', 'H', 'I', 'P', '1'};

void write_chip(const std::filesystem::path& path, const RasterChip& chip,
                std::optional<ModalityKind> modality = std::nullopt);
RasterChip read_chip(const std::filesystem::path& path);

std::filesystem::path sidecar_path(const std::filesystem::path& chip_path);

}  // namespace s2e
