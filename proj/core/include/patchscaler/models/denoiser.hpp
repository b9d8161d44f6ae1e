// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstddef>
#include <functional>

#include "patchscaler/grid.hpp"
#include "patchscaler/rtm.hpp"
#include "patchscaler/schedule.hpp"

namespace patchscaler::models {

/// Maps a noisy sample x_t at step t (optionally conditioned on a texture
/// prompt) to an estimate of x_0 with the same shape. Implementations are
/// deterministic and safe to call concurrently.
class Denoiser {
public:
    using BoundFn = std::function<LatentGrid(const LatentGrid& x_t, int t)>;

    virtual ~Denoiser() = default;

    /// `prompt` may be null for unconditional denoising.
    virtual LatentGrid denoise(const LatentGrid& x_t, int t, const RetrievalResult* prompt) const = 0;

    /// Binds a prompt once for a whole sampling ladder. Implementations with a
    /// time-independent prompt encoding do that work here rather than per
    /// call. `prompt` must outlive the returned function.
    virtual BoundFn bind_prompt(const RetrievalResult* prompt) const;
};

struct GaussianOracleStats {
    double mean = 0.0;
    double variance = 1.0;
};

/// Posterior mean E[x0 | x_t] for x0 ~ N(mean, variance) per cell, under
/// x_t = sqrt(ab) x0 + sqrt(1 - ab) eps.
LatentGrid denoise_gaussian_oracle(const GaussianOracleStats& stats, const NoiseSchedule& s, const LatentGrid& x_t,
                                   int t);

class GaussianOracleDenoiser final : public Denoiser {
public:
    GaussianOracleDenoiser(GaussianOracleStats stats, const NoiseSchedule& schedule);

    LatentGrid denoise(const LatentGrid& x_t, int t, const RetrievalResult* prompt) const override;

private:
    GaussianOracleStats m_stats;
    const NoiseSchedule& m_schedule;
};

/// Forwards to another denoiser and counts every evaluation.
class CountingDenoiser final : public Denoiser {
public:
    explicit CountingDenoiser(const Denoiser& inner) : m_inner(inner) {}

    LatentGrid denoise(const LatentGrid& x_t, int t, const RetrievalResult* prompt) const override;
    BoundFn bind_prompt(const RetrievalResult* prompt) const override;

    std::size_t calls() const noexcept { return m_calls.load(); }
    void reset() noexcept { m_calls = 0; }

private:
    const Denoiser& m_inner;
    mutable std::atomic<std::size_t> m_calls{0};
};

}  // namespace patchscaler::models
