// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "patchscaler/grid.hpp"
#include "patchscaler/group_label.hpp"

namespace patchscaler {

struct PatchAnchor {
    std::size_t top = 0;
    std::size_t left = 0;
    friend bool operator==(const PatchAnchor&, const PatchAnchor&) = default;
};

/// Overlapping VxV windows covering a source grid. Anchors advance by
/// V - overlap; the last anchor on each axis is clamped so every window lies
/// inside the grid. Anchors are in row-major order.
struct PatchGrid {
    std::size_t patch_size = 0;
    std::size_t overlap = 0;
    GridShape source;
    std::vector<PatchAnchor> anchors;

    std::size_t count() const noexcept { return anchors.size(); }
    GridShape patch_shape() const noexcept { return {source.channels, patch_size, patch_size}; }
};

/// Anchor positions along one axis of length `extent`.
std::vector<std::size_t> axis_anchors(std::size_t extent, std::size_t patch_size, std::size_t overlap);

PatchGrid make_patch_grid(GridShape source, std::size_t patch_size, std::size_t overlap);

enum class BlendMode { uniform, raised_cosine };

/// Recomposition weights, one per (patch, in-patch cell). For every source
/// cell the weights of all covering patches sum to one.
class BlendWeights {
public:
    BlendWeights() = default;
    BlendWeights(const PatchGrid& grid, BlendMode mode);

    float weight(std::size_t patch, std::size_t y, std::size_t x) const noexcept {
        return m_weights[(patch * m_patch_size + y) * m_patch_size + x];
    }
    BlendMode mode() const noexcept { return m_mode; }
    std::size_t patch_count() const noexcept { return m_patch_size == 0 ? 0 : m_weights.size() / (m_patch_size * m_patch_size); }

private:
    BlendMode m_mode = BlendMode::uniform;
    std::size_t m_patch_size = 0;
    std::vector<float> m_weights;
};

struct Decomposition {
    std::vector<LatentGrid> patches;
    PatchGrid grid;
};

Decomposition decompose(const LatentGrid& feature, std::size_t patch_size, std::size_t overlap);

LatentGrid extract_patch(const LatentGrid& feature, PatchAnchor anchor, std::size_t patch_size);

LatentGrid recompose(std::span<const LatentGrid> patches, const PatchGrid& grid, const BlendWeights& weights);

/// Patch indices per difficulty group, each in ascending patch order.
using GroupPartition = std::array<std::vector<std::size_t>, 3>;

GroupPartition partition_by_group(const PatchGrid& grid, const QuantifiedMap& qmap);

}  // namespace patchscaler
