// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "patchscaler/grid.hpp"

namespace patchscaler {

struct WaveletLevel {
    LatentGrid horizontal;
    LatentGrid vertical;
    LatentGrid diagonal;
};

/// Orthonormal Haar decomposition. levels[0] holds the finest detail bands;
/// `low` is the coarsest approximation band.
struct WaveletPyramid {
    LatentGrid low;
    std::vector<WaveletLevel> levels;
};

/// Throws ShapeError unless height and width are divisible by 2^levels.
WaveletPyramid haar_forward(const LatentGrid& image, int levels);
LatentGrid haar_inverse(const WaveletPyramid& pyramid);

/// Replaces the coarsest low band of `sr` with that of `lr_up`, keeping the
/// detail bands of `sr`.
LatentGrid wavelet_color_normalize(const LatentGrid& sr, const LatentGrid& lr_up, int levels = 2);

/// Edge-replicates `image` up to the next multiple of `multiple` on both axes.
LatentGrid pad_to_multiple(const LatentGrid& image, std::size_t multiple);
LatentGrid crop(const LatentGrid& image, std::size_t height, std::size_t width);

}  // namespace patchscaler
