// SPDX-License-Identifier: Apache-2.0
#include "patchscaler/tiling.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "patchscaler/error.hpp"

namespace patchscaler {

std::vector<std::size_t> axis_anchors(std::size_t extent, std::size_t patch_size, std::size_t overlap) {
    if (patch_size == 0) throw ConfigError("patch size must be positive");
    if (overlap >= patch_size) {
        throw ConfigError("overlap " + std::to_string(overlap) + " must be smaller than patch size " +
                          std::to_string(patch_size));
    }
    if (extent < patch_size) {
        throw ShapeError("grid extent " + std::to_string(extent) + " is smaller than patch size " +
                         std::to_string(patch_size));
    }
    const std::size_t stride = patch_size - overlap;
    std::vector<std::size_t> out;
    std::size_t pos = 0;
    while (pos + patch_size < extent) {
        out.push_back(pos);
        pos += stride;
    }
    out.push_back(extent - patch_size);
    return out;
}

PatchGrid make_patch_grid(GridShape source, std::size_t patch_size, std::size_t overlap) {
    PatchGrid grid{patch_size, overlap, source, {}};
    const auto rows = axis_anchors(source.height, patch_size, overlap);
    const auto cols = axis_anchors(source.width, patch_size, overlap);
    grid.anchors.reserve(rows.size() * cols.size());
    for (std::size_t top : rows) {
        for (std::size_t left : cols) grid.anchors.push_back({top, left});
    }
    return grid;
}

namespace {

// Strictly positive taper so every covering patch contributes.
float raised_cosine(std::size_t i, std::size_t n) {
    const double phase = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    return static_cast<float>(0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * phase));
}

}  // namespace

BlendWeights::BlendWeights(const PatchGrid& grid, BlendMode mode) : m_mode(mode), m_patch_size(grid.patch_size) {
    const std::size_t v = grid.patch_size;
    const std::size_t h = grid.source.height;
    const std::size_t w = grid.source.width;

    std::vector<float> window(v * v, 1.0f);
    if (mode == BlendMode::raised_cosine) {
        for (std::size_t y = 0; y < v; ++y) {
            for (std::size_t x = 0; x < v; ++x) window[y * v + x] = raised_cosine(y, v) * raised_cosine(x, v);
        }
    }

    std::vector<double> total(h * w, 0.0);
    for (const PatchAnchor& a : grid.anchors) {
        for (std::size_t y = 0; y < v; ++y) {
            for (std::size_t x = 0; x < v; ++x) total[(a.top + y) * w + a.left + x] += window[y * v + x];
        }
    }

    m_weights.resize(grid.count() * v * v);
    for (std::size_t p = 0; p < grid.count(); ++p) {
        const PatchAnchor& a = grid.anchors[p];
        for (std::size_t y = 0; y < v; ++y) {
            for (std::size_t x = 0; x < v; ++x) {
                m_weights[(p * v + y) * v + x] =
                    static_cast<float>(window[y * v + x] / total[(a.top + y) * w + a.left + x]);
            }
        }
    }
}

LatentGrid extract_patch(const LatentGrid& feature, PatchAnchor anchor, std::size_t patch_size) {
    if (anchor.top + patch_size > feature.height() || anchor.left + patch_size > feature.width()) {
        throw ShapeError("patch window at (" + std::to_string(anchor.top) + ", " + std::to_string(anchor.left) +
                         ") exceeds grid bounds");
    }
    LatentGrid patch(feature.channels(), patch_size, patch_size);
    for (std::size_t c = 0; c < feature.channels(); ++c) {
        for (std::size_t y = 0; y < patch_size; ++y) {
            for (std::size_t x = 0; x < patch_size; ++x) patch.at(c, y, x) = feature.at(c, anchor.top + y, anchor.left + x);
        }
    }
    return patch;
}

Decomposition decompose(const LatentGrid& feature, std::size_t patch_size, std::size_t overlap) {
    Decomposition out{{}, make_patch_grid(feature.shape(), patch_size, overlap)};
    out.patches.reserve(out.grid.count());
    for (const PatchAnchor& a : out.grid.anchors) out.patches.push_back(extract_patch(feature, a, patch_size));
    return out;
}

LatentGrid recompose(std::span<const LatentGrid> patches, const PatchGrid& grid, const BlendWeights& weights) {
    if (patches.size() != grid.count()) {
        throw ShapeError("recompose got " + std::to_string(patches.size()) + " patches for a grid of " +
                         std::to_string(grid.count()));
    }
    if (weights.patch_count() != grid.count()) throw ShapeError("blend weights do not match the patch grid");
    const GridShape pshape = grid.patch_shape();
    for (const LatentGrid& p : patches) {
        if (p.shape() != pshape) throw ShapeError("patch shape does not match the patch grid");
    }

    const std::size_t v = grid.patch_size;
    const GridShape& src = grid.source;
    std::vector<double> acc(src.size(), 0.0);
    for (std::size_t p = 0; p < patches.size(); ++p) {
        const PatchAnchor& a = grid.anchors[p];
        for (std::size_t c = 0; c < src.channels; ++c) {
            for (std::size_t y = 0; y < v; ++y) {
                for (std::size_t x = 0; x < v; ++x) {
                    acc[(c * src.height + a.top + y) * src.width + a.left + x] +=
                        static_cast<double>(weights.weight(p, y, x)) * patches[p].at(c, y, x);
                }
            }
        }
    }
    std::vector<float> data(acc.begin(), acc.end());
    return LatentGrid(src, std::move(data));
}

GroupPartition partition_by_group(const PatchGrid& grid, const QuantifiedMap& qmap) {
    if (qmap.size() != grid.count()) {
        throw ShapeError("qmap has " + std::to_string(qmap.size()) + " labels for " + std::to_string(grid.count()) +
                         " patches");
    }
    GroupPartition out;
    for (std::size_t i = 0; i < qmap.size(); ++i) out[group_index(qmap.labels[i])].push_back(i);
    return out;
}

}  // namespace patchscaler
