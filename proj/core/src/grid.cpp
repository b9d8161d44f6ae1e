// SPDX-License-Identifier: Apache-2.0
#include "patchscaler/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "patchscaler/error.hpp"

namespace patchscaler {

namespace {

std::string shape_string(const GridShape& s) {
    return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" + std::to_string(s.width);
}

}  // namespace

LatentGrid::LatentGrid(std::size_t channels, std::size_t height, std::size_t width, float fill)
    : LatentGrid(GridShape{channels, height, width}, fill) {}

LatentGrid::LatentGrid(GridShape shape, float fill) : m_shape(shape), m_data(shape.size(), fill) {}

LatentGrid::LatentGrid(GridShape shape, std::vector<float> data) : m_shape(shape), m_data(std::move(data)) {
    if (m_data.size() != m_shape.size()) {
        throw ShapeError("grid data length " + std::to_string(m_data.size()) + " does not match shape " +
                         shape_string(m_shape));
    }
}

bool LatentGrid::all_finite() const noexcept {
    return std::all_of(m_data.begin(), m_data.end(), [](float v) { return std::isfinite(v); });
}

void require_same_shape(const LatentGrid& a, const LatentGrid& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(what) + ": shape " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    }
}

double mean_squared_error(const LatentGrid& a, const LatentGrid& b) {
    require_same_shape(a, b, "mean_squared_error");
    if (a.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a.data()[i]) - b.data()[i];
        sum += d * d;
    }
    return sum / static_cast<double>(a.size());
}

double max_abs_difference(const LatentGrid& a, const LatentGrid& b) {
    require_same_shape(a, b, "max_abs_difference");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(static_cast<double>(a.data()[i]) - b.data()[i]));
    }
    return worst;
}

std::string_view to_string(IoErrorKind kind) {
    switch (kind) {
        case IoErrorKind::open_failed: return "open failed";
        case IoErrorKind::magic_mismatch: return "magic mismatch";
        case IoErrorKind::version_mismatch: return "version mismatch";
        case IoErrorKind::truncated: return "truncated";
        case IoErrorKind::dimension_mismatch: return "dimension mismatch";
        case IoErrorKind::malformed: return "malformed";
    }
    return "unknown";
}

}  // namespace patchscaler
