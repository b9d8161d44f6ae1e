// SPDX-License-Identifier: Apache-2.0
#include "patchscaler/confidence.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "patchscaler/error.hpp"

namespace patchscaler {

void Thresholds::validate() const {
    if (!(gamma2 >= 0.0 && gamma2 < gamma1 && gamma1 <= 1.0)) {
        throw ConfigError("thresholds must satisfy 0 <= gamma2 < gamma1 <= 1 (got gamma1=" + std::to_string(gamma1) +
                          ", gamma2=" + std::to_string(gamma2) + ")");
    }
}

void LossParams::validate() const {
    if (!(lambda > 0.0 && eta > 0.0)) throw ConfigError("loss weights lambda and eta must be positive");
}

double confidence_loss_with_grad(std::span<const double> y, std::span<const double> x, std::span<const double> c,
                                 std::size_t channels, const LossParams& p, std::span<double> grad_y,
                                 std::span<double> grad_c) {
    p.validate();
    const std::size_t cells = c.size();
    if (channels == 0 || y.size() != channels * cells || x.size() != y.size()) {
        throw ShapeError("confidence loss: inconsistent input lengths");
    }
    if (grad_y.size() != y.size() || grad_c.size() != c.size()) {
        throw ShapeError("confidence loss: gradient buffers do not match inputs");
    }
    for (double v : c) {
        if (!(v > 0.0)) throw NumericError("confidence loss requires strictly positive confidence values");
    }

    const double n_all = static_cast<double>(y.size());
    const double n_cells = static_cast<double>(cells);
    const double n_ch = static_cast<double>(channels);

    double abs_sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) abs_sum += std::abs(y[i] - x[i]);
    const double mean_abs = abs_sum / n_all;

    std::vector<double> cell_sq(cells, 0.0);
    for (std::size_t ch = 0; ch < channels; ++ch) {
        for (std::size_t k = 0; k < cells; ++k) {
            const double e = y[ch * cells + k] - x[ch * cells + k];
            cell_sq[k] += e * e / n_ch;
        }
    }
    double conf_term = 0.0;
    for (std::size_t k = 0; k < cells; ++k) conf_term += c[k] * cell_sq[k] - p.eta * std::log(c[k]);
    conf_term /= n_cells;

    const double l1_scale = 2.0 * mean_abs / n_all;
    for (std::size_t ch = 0; ch < channels; ++ch) {
        for (std::size_t k = 0; k < cells; ++k) {
            const std::size_t i = ch * cells + k;
            const double e = y[i] - x[i];
            const double sign = e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0);
            grad_y[i] = l1_scale * sign + p.lambda * c[k] * 2.0 * e / (n_ch * n_cells);
        }
    }
    for (std::size_t k = 0; k < cells; ++k) grad_c[k] = p.lambda * (cell_sq[k] - p.eta / c[k]) / n_cells;

    return mean_abs * mean_abs + p.lambda * conf_term;
}

double confidence_loss(const LatentGrid& y_hr, const LatentGrid& x_hr, const ConfidenceMap& c, const LossParams& p) {
    require_same_shape(y_hr, x_hr, "confidence_loss");
    if (c.channels() != 1 || c.height() != y_hr.height() || c.width() != y_hr.width()) {
        throw ShapeError("confidence map must be 1 x h x w matching the feature's spatial shape");
    }
    std::vector<double> y(y_hr.data().begin(), y_hr.data().end());
    std::vector<double> x(x_hr.data().begin(), x_hr.data().end());
    std::vector<double> cv(c.data().begin(), c.data().end());
    std::vector<double> gy(y.size());
    std::vector<double> gc(cv.size());
    return confidence_loss_with_grad(y, x, cv, y_hr.channels(), p, gy, gc);
}

double optimal_confidence(double squared_error, double eta) {
    if (!(eta > 0.0)) throw ConfigError("eta must be positive");
    if (squared_error <= eta) return 1.0;
    return eta / squared_error;
}

double patch_mean_confidence(const ConfidenceMap& c, PatchAnchor anchor, std::size_t patch_size) {
    if (c.channels() != 1) throw ShapeError("confidence map must have one channel");
    if (patch_size == 0 || anchor.top + patch_size > c.height() || anchor.left + patch_size > c.width()) {
        throw ShapeError("confidence window at (" + std::to_string(anchor.top) + ", " + std::to_string(anchor.left) +
                         ") with size " + std::to_string(patch_size) + " is out of bounds");
    }
    double sum = 0.0;
    for (std::size_t y = 0; y < patch_size; ++y) {
        for (std::size_t x = 0; x < patch_size; ++x) sum += c.at(0, anchor.top + y, anchor.left + x);
    }
    return sum / static_cast<double>(patch_size * patch_size);
}

GroupLabel quantize(double average, const Thresholds& th) {
    th.validate();
    if (!(average >= 0.0 && average <= 1.0)) {
        throw ConfigError("average confidence " + std::to_string(average) + " outside [0, 1]");
    }
    if (average > th.gamma1) return GroupLabel::simple;
    if (average > th.gamma2) return GroupLabel::medium;
    return GroupLabel::hard;
}

QuantifiedMap build_qmap(const ConfidenceMap& c, const PatchGrid& grid, const Thresholds& th) {
    if (c.channels() != 1 || c.height() != grid.source.height || c.width() != grid.source.width) {
        throw ShapeError("confidence map does not match the patch grid's spatial shape");
    }
    QuantifiedMap q;
    q.labels.reserve(grid.count());
    for (const PatchAnchor& a : grid.anchors) q.labels.push_back(quantize(patch_mean_confidence(c, a, grid.patch_size), th));
    return q;
}

}  // namespace patchscaler
