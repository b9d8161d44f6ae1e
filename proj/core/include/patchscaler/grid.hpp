// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace patchscaler {

struct GridShape {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    std::size_t size() const noexcept { return channels * height * width; }
    std::size_t plane() const noexcept { return height * width; }
    friend bool operator==(const GridShape&, const GridShape&) = default;
};

/// A channels x height x width block of 32-bit floats in row-major
/// (channel, row, column) order. Carries images, latents, confidence maps and
/// patches alike.
class LatentGrid {
public:
    LatentGrid() = default;
    LatentGrid(std::size_t channels, std::size_t height, std::size_t width, float fill = 0.0f);
    explicit LatentGrid(GridShape shape, float fill = 0.0f);
    LatentGrid(GridShape shape, std::vector<float> data);

    const GridShape& shape() const noexcept { return m_shape; }
    std::size_t channels() const noexcept { return m_shape.channels; }
    std::size_t height() const noexcept { return m_shape.height; }
    std::size_t width() const noexcept { return m_shape.width; }
    std::size_t size() const noexcept { return m_data.size(); }
    bool empty() const noexcept { return m_data.empty(); }

    float& at(std::size_t c, std::size_t y, std::size_t x) noexcept {
        return m_data[(c * m_shape.height + y) * m_shape.width + x];
    }
    float at(std::size_t c, std::size_t y, std::size_t x) const noexcept {
        return m_data[(c * m_shape.height + y) * m_shape.width + x];
    }

    std::span<float> data() noexcept { return m_data; }
    std::span<const float> data() const noexcept { return m_data; }
    const std::vector<float>& values() const noexcept { return m_data; }

    bool all_finite() const noexcept;

    friend bool operator==(const LatentGrid&, const LatentGrid&) = default;

private:
    GridShape m_shape;
    std::vector<float> m_data;
};

/// Throws ShapeError when the shapes differ.
void require_same_shape(const LatentGrid& a, const LatentGrid& b, const char* what);

double mean_squared_error(const LatentGrid& a, const LatentGrid& b);
double max_abs_difference(const LatentGrid& a, const LatentGrid& b);

}  // namespace patchscaler
