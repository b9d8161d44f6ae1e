// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>

#include "patchscaler/grid.hpp"

namespace patchscaler {

// Raw grid files: an ASCII header line "PSG1 c h w\n" followed by c*h*w
// little-endian 32-bit floats.
void save_grid(const LatentGrid& grid, const std::filesystem::path& path);
LatentGrid load_grid(const std::filesystem::path& path);

/// 8-bit preview export. One channel writes PGM, three channels write PPM;
/// values are mapped linearly from [lo, hi] and clipped.
void export_preview(const LatentGrid& grid, const std::filesystem::path& path, float lo, float hi);

}  // namespace patchscaler
