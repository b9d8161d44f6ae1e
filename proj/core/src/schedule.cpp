// SPDX-License-Identifier: Apache-2.0
#include "patchscaler/schedule.hpp"

#include <cmath>
#include <string>

#include "patchscaler/error.hpp"

namespace patchscaler {

NoiseSchedule::NoiseSchedule(const std::vector<double>& betas) {
    if (betas.empty()) throw ConfigError("noise schedule needs at least one step");
    m_betas.assign(1, 0.0f);
    m_alphas.assign(1, 1.0f);
    m_alpha_bars.assign(1, 1.0f);
    double alpha_bar = 1.0;
    for (std::size_t i = 0; i < betas.size(); ++i) {
        const double beta = betas[i];
        if (!(beta > 0.0 && beta < 1.0)) {
            throw ConfigError("beta at step " + std::to_string(i + 1) + " is outside (0, 1): " + std::to_string(beta));
        }
        alpha_bar *= 1.0 - beta;
        m_betas.push_back(static_cast<float>(beta));
        m_alphas.push_back(static_cast<float>(1.0 - beta));
        m_alpha_bars.push_back(static_cast<float>(alpha_bar));
    }
    if (!(m_alpha_bars.back() > 0.0f)) throw ConfigError("alpha_bar underflows to zero at the final step");
}

void NoiseSchedule::require_step(int t, bool allow_zero) const {
    const int lo = allow_zero ? 0 : 1;
    if (t < lo || t > steps()) {
        throw ConfigError("time step " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " +
                          std::to_string(steps()) + "]");
    }
}

float NoiseSchedule::beta(int t) const {
    require_step(t);
    return m_betas[t];
}

float NoiseSchedule::alpha(int t) const {
    require_step(t);
    return m_alphas[t];
}

float NoiseSchedule::alpha_bar(int t) const {
    require_step(t, true);
    return m_alpha_bars[t];
}

NoiseSchedule build_linear_schedule(int steps, double beta_start, double beta_end) {
    if (steps < 1) throw ConfigError("schedule step count must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
        throw ConfigError("linear schedule requires 0 < beta_start <= beta_end < 1");
    }
    std::vector<double> betas(static_cast<std::size_t>(steps));
    for (int i = 0; i < steps; ++i) {
        const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
        betas[i] = beta_start + (beta_end - beta_start) * frac;
    }
    return NoiseSchedule(betas);
}

SubstepLadder make_substeps(int tau, int n) {
    if (n < 1) throw ConfigError("sampling step count must be >= 1");
    if (tau < 1) throw ConfigError("intermediate step must be >= 1");
    if (n > tau) {
        throw ConfigError("sampling step count " + std::to_string(n) + " exceeds intermediate step " +
                          std::to_string(tau));
    }
    SubstepLadder ladder;
    ladder.steps.resize(static_cast<std::size_t>(n) + 1);
    for (int i = 0; i <= n; ++i) {
        ladder.steps[i] = static_cast<int>((static_cast<long long>(tau) * (n - i)) / n);
    }
    // Collapse duplicates walking up from the tail; steps[0] stays tau.
    for (int i = n - 1; i >= 1; --i) {
        if (ladder.steps[i] <= ladder.steps[i + 1]) ladder.steps[i] = ladder.steps[i + 1] + 1;
    }
    return ladder;
}

namespace {

LatentGrid affine_mix(const LatentGrid& a, float wa, const LatentGrid& b, float wb) {
    LatentGrid out(a.shape());
    auto o = out.data();
    auto av = a.data();
    auto bv = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = wa * av[i] + wb * bv[i];
    return out;
}

}  // namespace

LatentGrid forward_sample(const NoiseSchedule& s, const LatentGrid& x0, int t, const LatentGrid& eps) {
    s.require_step(t);
    require_same_shape(x0, eps, "forward_sample");
    const float ab = s.alpha_bar(t);
    return affine_mix(x0, std::sqrt(ab), eps, std::sqrt(1.0f - ab));
}

LatentGrid forward_step(const NoiseSchedule& s, const LatentGrid& x_prev, int t, const LatentGrid& eps) {
    s.require_step(t);
    require_same_shape(x_prev, eps, "forward_step");
    const float beta = s.beta(t);
    return affine_mix(x_prev, std::sqrt(1.0f - beta), eps, std::sqrt(beta));
}

LatentGrid truncated_forward(const NoiseSchedule& s, const LatentGrid& y0, int tau, const LatentGrid& eps) {
    return forward_sample(s, y0, tau, eps);
}

LatentGrid reverse_step(const NoiseSchedule& s, const LatentGrid& x_t, const LatentGrid& x0_hat, int t, int t_next) {
    s.require_step(t);
    s.require_step(t_next, true);
    if (t_next >= t) {
        throw ConfigError("reverse step must descend: t_next " + std::to_string(t_next) + " >= t " + std::to_string(t));
    }
    require_same_shape(x_t, x0_hat, "reverse_step");
    if (t_next == 0) return x0_hat;

    const double ab_t = s.alpha_bar(t);
    const double ab_next = s.alpha_bar(t_next);
    const double sqrt_ab_t = std::sqrt(ab_t);
    const double inv_sigma_t = 1.0 / std::sqrt(1.0 - ab_t);
    const double sqrt_ab_next = std::sqrt(ab_next);
    const double sigma_next = std::sqrt(1.0 - ab_next);

    LatentGrid out(x_t.shape());
    auto o = out.data();
    auto xt = x_t.data();
    auto x0 = x0_hat.data();
    for (std::size_t i = 0; i < o.size(); ++i) {
        const double eps_hat = (xt[i] - sqrt_ab_t * x0[i]) * inv_sigma_t;
        o[i] = static_cast<float>(sqrt_ab_next * x0[i] + sigma_next * eps_hat);
    }
    return out;
}

}  // namespace patchscaler
