// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "patchscaler/group_label.hpp"
#include "patchscaler/models/denoiser.hpp"
#include "patchscaler/schedule.hpp"

namespace patchscaler {

struct GroupSetting {
    int tau = 1000;
    int steps = 20;
    friend bool operator==(const GroupSetting&, const GroupSetting&) = default;
};

struct GroupConfig {
    std::array<GroupSetting, 3> groups{{{400, 8}, {700, 14}, {1000, 20}}};
    int unified_steps = 20;  // baseline budget the report compares against

    const GroupSetting& operator[](GroupLabel g) const noexcept { return groups[group_index(g)]; }
    GroupSetting& operator[](GroupLabel g) noexcept { return groups[group_index(g)]; }

    /// Throws ConfigError unless taus and step counts are non-decreasing from
    /// simple to hard, each 1 <= steps <= tau <= max_step, and unified_steps >= 1.
    void validate(int max_step) const;
};

/// Per-patch prompts; either empty (no conditioning) or one entry per patch,
/// where a null entry means that patch runs unconditionally.
using PromptRefs = std::vector<const RetrievalResult*>;

struct PgsReport {
    std::string mode = "pgs";
    std::array<std::size_t, 3> patches{};
    std::array<std::size_t, 3> nfe{};
    std::size_t nfe_total = 0;
    std::size_t nfe_unified = 0;
    double nfe_ratio = 0.0;
    double wall_ms = 0.0;
};

/// key = value lines.
std::string to_text(const PgsReport& report);

std::vector<GroupSetting> plan(const QuantifiedMap& qmap, const GroupConfig& cfg);

/// Seed of the initialization noise for one patch of a run.
std::uint64_t patch_seed(std::uint64_t run_seed, std::size_t patch_index);

/// Standard normal noise drawn from patch_seed(run_seed, patch_index).
LatentGrid patch_noise(std::uint64_t run_seed, std::size_t patch_index, GridShape shape);

/// Truncated forward diffusion of every patch to tau, then n reverse steps
/// down make_substeps(tau, n). `indices` gives the global patch index used to
/// derive each patch's noise; when empty, patch i uses index i.
std::vector<LatentGrid> run_group(const models::Denoiser& denoiser, const NoiseSchedule& s,
                                  std::span<const LatentGrid> patches, int tau, int n, const PromptRefs& prompts,
                                  std::uint64_t seed, std::span<const std::size_t> indices = {});

struct PgsResult {
    std::vector<LatentGrid> patches;
    PgsReport report;
};

/// Groups run on separate threads when `parallel` is set; results do not
/// depend on it.
PgsResult run_pgs(const models::Denoiser& denoiser, const NoiseSchedule& s, std::span<const LatentGrid> patches,
                  const QuantifiedMap& qmap, const GroupConfig& cfg, const PromptRefs& prompts, std::uint64_t seed,
                  bool parallel = false);

/// Every patch from tau = T with n_unified steps. Reported in the hard slot.
PgsResult compare_unified(const models::Denoiser& denoiser, const NoiseSchedule& s,
                          std::span<const LatentGrid> patches, int n_unified, const PromptRefs& prompts,
                          std::uint64_t seed);

}  // namespace patchscaler
