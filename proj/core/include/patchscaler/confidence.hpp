// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>

#include "patchscaler/grid.hpp"
#include "patchscaler/group_label.hpp"
#include "patchscaler/tiling.hpp"

namespace patchscaler {

/// A 1 x h x w grid of per-cell confidences in (0, 1].
using ConfidenceMap = LatentGrid;

inline constexpr float kMinConfidence = 1e-4f;

struct Thresholds {
    double gamma1 = 0.95;
    double gamma2 = 0.75;

    /// Throws ConfigError unless 0 <= gamma2 < gamma1 <= 1.
    void validate() const;
};

struct LossParams {
    double lambda = 1.0;
    double eta = 1.0;

    void validate() const;
};

/// Confidence-driven restoration loss
///     (mean |y - x|)^2 + lambda * mean_cells( C * mean_ch (y - x)^2 - eta * log C )
/// The confidence of a cell applies to all channels at that cell.
double confidence_loss(const LatentGrid& y_hr, const LatentGrid& x_hr, const ConfidenceMap& c, const LossParams& p);

/// Same loss in 64-bit arithmetic with gradients. `y` and `x` are
/// channel-major (channels blocks of `cells` values); `c` holds one value per
/// cell. Gradient spans must match their inputs in length.
double confidence_loss_with_grad(std::span<const double> y, std::span<const double> x, std::span<const double> c,
                                 std::size_t channels, const LossParams& p, std::span<double> grad_y,
                                 std::span<double> grad_c);

/// Per-cell minimizer of C * e2 - eta * log C over C in (0, 1].
double optimal_confidence(double squared_error, double eta);

double patch_mean_confidence(const ConfidenceMap& c, PatchAnchor anchor, std::size_t patch_size);

/// Simple on (gamma1, 1], Medium on (gamma2, gamma1], Hard on [0, gamma2].
GroupLabel quantize(double average, const Thresholds& th);

QuantifiedMap build_qmap(const ConfidenceMap& c, const PatchGrid& grid, const Thresholds& th);

}  // namespace patchscaler
