// SPDX-License-Identifier: Apache-2.0
#include "patchscaler/models/denoiser.hpp"

#include <cmath>

#include "patchscaler/error.hpp"

namespace patchscaler::models {

Denoiser::BoundFn Denoiser::bind_prompt(const RetrievalResult* prompt) const {
    return [this, prompt](const LatentGrid& x_t, int t) { return denoise(x_t, t, prompt); };
}

LatentGrid denoise_gaussian_oracle(const GaussianOracleStats& stats, const NoiseSchedule& s, const LatentGrid& x_t,
                                   int t) {
    if (!(stats.variance > 0.0)) throw ConfigError("oracle prior variance must be positive");
    s.require_step(t);
    const double ab = s.alpha_bar(t);
    const double denom = ab * stats.variance + 1.0 - ab;
    const double gain = std::sqrt(ab) * stats.variance / denom;
    const double offset = (1.0 - ab) * stats.mean / denom;
    LatentGrid out(x_t.shape());
    auto o = out.data();
    auto in = x_t.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = static_cast<float>(gain * in[i] + offset);
    return out;
}

GaussianOracleDenoiser::GaussianOracleDenoiser(GaussianOracleStats stats, const NoiseSchedule& schedule)
    : m_stats(stats), m_schedule(schedule) {
    if (!(m_stats.variance > 0.0)) throw ConfigError("oracle prior variance must be positive");
}

LatentGrid GaussianOracleDenoiser::denoise(const LatentGrid& x_t, int t, const RetrievalResult*) const {
    return denoise_gaussian_oracle(m_stats, m_schedule, x_t, t);
}

LatentGrid CountingDenoiser::denoise(const LatentGrid& x_t, int t, const RetrievalResult* prompt) const {
    ++m_calls;
    return m_inner.denoise(x_t, t, prompt);
}

Denoiser::BoundFn CountingDenoiser::bind_prompt(const RetrievalResult* prompt) const {
    BoundFn inner = m_inner.bind_prompt(prompt);
    return [this, inner = std::move(inner)](const LatentGrid& x_t, int t) {
        ++m_calls;
        return inner(x_t, t);
    };
}

}  // namespace patchscaler::models
