// SPDX-License-Identifier: Apache-2.0
#include "patchscaler/pgs.hpp"

#include <chrono>
#include <exception>
#include <random>
#include <sstream>
#include <thread>

#include "patchscaler/error.hpp"
#include "patchscaler/tiling.hpp"

namespace patchscaler {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

void check_prompts(const PromptRefs& prompts, std::size_t count) {
    if (!prompts.empty() && prompts.size() != count) {
        throw ShapeError("prompt list has " + std::to_string(prompts.size()) + " entries for " + std::to_string(count) +
                         " patches");
    }
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

void finish_report(PgsReport& r, std::size_t patch_count, int unified_steps) {
    r.nfe_total = r.nfe[0] + r.nfe[1] + r.nfe[2];
    r.nfe_unified = patch_count * static_cast<std::size_t>(unified_steps);
    r.nfe_ratio = r.nfe_unified == 0 ? 0.0 : static_cast<double>(r.nfe_total) / static_cast<double>(r.nfe_unified);
}

}  // namespace

void GroupConfig::validate(int max_step) const {
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const GroupSetting& s = groups[g];
        const std::string name(group_name(kAllGroups[g]));
        if (s.steps < 1) throw ConfigError(name + " group needs at least one sampling step");
        if (s.tau < s.steps) throw ConfigError(name + " group has more sampling steps than its tau");
        if (s.tau > max_step) throw ConfigError(name + " group tau exceeds the schedule length");
        if (g > 0 && (s.tau < groups[g - 1].tau || s.steps < groups[g - 1].steps)) {
            throw ConfigError("group taus and step counts must not decrease from simple to hard");
        }
    }
    if (unified_steps < 1 || unified_steps > max_step) throw ConfigError("unified step count out of range");
}

std::string to_text(const PgsReport& r) {
    std::ostringstream out;
    out << "mode = " << r.mode << '\n';
    for (GroupLabel g : kAllGroups) out << "patches_" << group_name(g) << " = " << r.patches[group_index(g)] << '\n';
    for (GroupLabel g : kAllGroups) out << "nfe_" << group_name(g) << " = " << r.nfe[group_index(g)] << '\n';
    out << "nfe_total = " << r.nfe_total << '\n';
    out << "nfe_unified = " << r.nfe_unified << '\n';
    out << "nfe_ratio = " << r.nfe_ratio << '\n';
    out << "wall_ms = " << r.wall_ms << '\n';
    return out.str();
}

std::vector<GroupSetting> plan(const QuantifiedMap& qmap, const GroupConfig& cfg) {
    std::vector<GroupSetting> out;
    out.reserve(qmap.size());
    for (GroupLabel g : qmap.labels) out.push_back(cfg[g]);
    return out;
}

std::uint64_t patch_seed(std::uint64_t run_seed, std::size_t patch_index) {
    return splitmix(splitmix(run_seed) ^ static_cast<std::uint64_t>(patch_index));
}

LatentGrid patch_noise(std::uint64_t run_seed, std::size_t patch_index, GridShape shape) {
    std::mt19937_64 rng(patch_seed(run_seed, patch_index));
    std::normal_distribution<float> normal(0.0f, 1.0f);
    LatentGrid eps(shape);
    for (float& v : eps.data()) v = normal(rng);
    return eps;
}

std::vector<LatentGrid> run_group(const models::Denoiser& denoiser, const NoiseSchedule& s,
                                  std::span<const LatentGrid> patches, int tau, int n, const PromptRefs& prompts,
                                  std::uint64_t seed, std::span<const std::size_t> indices) {
    s.require_step(tau);
    if (n < 1 || n > tau) throw ConfigError("sampling steps must lie in [1, tau]");
    check_prompts(prompts, patches.size());
    if (!indices.empty() && indices.size() != patches.size()) throw ShapeError("index list does not match patches");
    const SubstepLadder ladder = make_substeps(tau, n);

    std::vector<LatentGrid> out;
    out.reserve(patches.size());
    for (std::size_t i = 0; i < patches.size(); ++i) {
        const std::size_t index = indices.empty() ? i : indices[i];
        const models::Denoiser::BoundFn f = denoiser.bind_prompt(prompts.empty() ? nullptr : prompts[i]);
        LatentGrid x = truncated_forward(s, patches[i], tau, patch_noise(seed, index, patches[i].shape()));
        for (std::size_t k = 0; k + 1 < ladder.steps.size(); ++k) {
            const int t = ladder.steps[k];
            const LatentGrid x0_hat = f(x, t);
            require_same_shape(x0_hat, x, "denoiser output");
            x = reverse_step(s, x, x0_hat, t, ladder.steps[k + 1]);
        }
        out.push_back(std::move(x));
    }
    return out;
}

PgsResult run_pgs(const models::Denoiser& denoiser, const NoiseSchedule& s, std::span<const LatentGrid> patches,
                  const QuantifiedMap& qmap, const GroupConfig& cfg, const PromptRefs& prompts, std::uint64_t seed,
                  bool parallel) {
    const auto start = std::chrono::steady_clock::now();
    cfg.validate(s.steps());
    if (qmap.size() != patches.size()) {
        throw ShapeError("quantified map has " + std::to_string(qmap.size()) + " labels for " +
                         std::to_string(patches.size()) + " patches");
    }
    check_prompts(prompts, patches.size());

    GroupPartition groups;
    for (std::size_t i = 0; i < qmap.size(); ++i) groups[group_index(qmap.labels[i])].push_back(i);

    std::array<std::vector<LatentGrid>, 3> restored;
    auto run_one = [&](std::size_t g) {
        const std::vector<std::size_t>& idx = groups[g];
        if (idx.empty()) return;
        std::vector<LatentGrid> members;
        PromptRefs member_prompts;
        members.reserve(idx.size());
        for (std::size_t i : idx) {
            members.push_back(patches[i]);
            if (!prompts.empty()) member_prompts.push_back(prompts[i]);
        }
        const GroupSetting& setting = cfg.groups[g];
        restored[g] = run_group(denoiser, s, members, setting.tau, setting.steps, member_prompts, seed, idx);
    };

    if (parallel) {
        std::array<std::exception_ptr, 3> errors;
        std::vector<std::jthread> workers;
        for (std::size_t g = 0; g < 3; ++g) {
            workers.emplace_back([&, g] {
                try {
                    run_one(g);
                } catch (...) {
                    errors[g] = std::current_exception();
                }
            });
        }
        workers.clear();
        for (const std::exception_ptr& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    } else {
        for (std::size_t g = 0; g < 3; ++g) run_one(g);
    }

    PgsResult result;
    result.patches.resize(patches.size());
    for (std::size_t g = 0; g < 3; ++g) {
        for (std::size_t k = 0; k < groups[g].size(); ++k) result.patches[groups[g][k]] = std::move(restored[g][k]);
        result.report.patches[g] = groups[g].size();
        result.report.nfe[g] = groups[g].size() * static_cast<std::size_t>(cfg.groups[g].steps);
    }
    finish_report(result.report, patches.size(), cfg.unified_steps);
    result.report.wall_ms = elapsed_ms(start);
    return result;
}

PgsResult compare_unified(const models::Denoiser& denoiser, const NoiseSchedule& s,
                          std::span<const LatentGrid> patches, int n_unified, const PromptRefs& prompts,
                          std::uint64_t seed) {
    const auto start = std::chrono::steady_clock::now();
    PgsResult result;
    result.patches = run_group(denoiser, s, patches, s.steps(), n_unified, prompts, seed);
    PgsReport& r = result.report;
    r.mode = "unified";
    r.patches[group_index(GroupLabel::hard)] = patches.size();
    r.nfe[group_index(GroupLabel::hard)] = patches.size() * static_cast<std::size_t>(n_unified);
    finish_report(r, patches.size(), n_unified);
    r.wall_ms = elapsed_ms(start);
    return result;
}

}  // namespace patchscaler
