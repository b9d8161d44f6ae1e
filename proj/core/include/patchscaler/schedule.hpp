// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "patchscaler/grid.hpp"

namespace patchscaler {

/// Precomputed per-step noise tables. Step indices run 1..T; alpha_bar(0) is 1.
/// Tables are built in 64-bit arithmetic and stored as 32-bit floats.
class NoiseSchedule {
public:
    /// Takes betas for steps 1..T. Throws ConfigError if any beta is outside (0, 1).
    explicit NoiseSchedule(const std::vector<double>& betas);

    int steps() const noexcept { return static_cast<int>(m_betas.size()) - 1; }

    float beta(int t) const;
    float alpha(int t) const;
    float alpha_bar(int t) const;

    /// Throws ConfigError unless 1 <= t <= T (or 0 <= t when allow_zero).
    void require_step(int t, bool allow_zero = false) const;

private:
    std::vector<float> m_betas;       // index 0 unused
    std::vector<float> m_alphas;      // index 0 unused
    std::vector<float> m_alpha_bars;  // alpha_bar[0] == 1
};

NoiseSchedule build_linear_schedule(int steps, double beta_start, double beta_end);

/// Strictly decreasing ladder of time steps from tau down to 0 with exactly n transitions.
struct SubstepLadder {
    std::vector<int> steps;

    int transitions() const noexcept { return static_cast<int>(steps.size()) - 1; }
};

SubstepLadder make_substeps(int tau, int n);

/// sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps
LatentGrid forward_sample(const NoiseSchedule& s, const LatentGrid& x0, int t, const LatentGrid& eps);

/// One forward Markov step: sqrt(1 - beta_t) * x_prev + sqrt(beta_t) * eps
LatentGrid forward_step(const NoiseSchedule& s, const LatentGrid& x_prev, int t, const LatentGrid& eps);

/// Starts the reverse process at tau from a coarse estimate y0 instead of pure noise.
LatentGrid truncated_forward(const NoiseSchedule& s, const LatentGrid& y0, int tau, const LatentGrid& eps);

/// Deterministic x0-prediction update from t to t_next < t. Recovers the noise
/// implied by (x_t, x0_hat) and re-noises x0_hat to level t_next. Returns
/// x0_hat unchanged when t_next == 0.
LatentGrid reverse_step(const NoiseSchedule& s, const LatentGrid& x_t, const LatentGrid& x0_hat, int t, int t_next);

}  // namespace patchscaler
