// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "patchscaler/confidence.hpp"
#include "patchscaler/grid.hpp"
#include "patchscaler/models/denoiser.hpp"
#include "patchscaler/models/grm.hpp"
#include "patchscaler/models/patch_dit.hpp"
#include "patchscaler/pgs.hpp"
#include "patchscaler/rtm.hpp"
#include "patchscaler/schedule.hpp"

namespace patchscaler {

struct PipelineConfig {
    std::size_t downsample = 1;  // latent factor d
    std::size_t scale = 2;       // LR to HR magnification
    std::size_t patch_size = 16;
    std::size_t overlap = 4;
    double gamma1 = 0.95;
    double gamma2 = 0.75;
    GroupConfig groups;
    std::size_t topk = 4;
    std::string rtm_path;
    std::string grm_path;
    std::string dit_path;
    std::string denoiser = "patchdit";  // "patchdit" or "oracle"
    double oracle_mean = 0.0;
    double oracle_variance = 1.0;
    int schedule_steps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    std::uint64_t seed = 0;
    std::uint64_t extractor_seed = 7;
    std::size_t extractor_dim = 32;
    int color_levels = 2;
    bool color_normalize = true;
    bool parallel_groups = false;
    std::string input;
    std::string output;

    Thresholds thresholds() const { return {gamma1, gamma2}; }
    NoiseSchedule schedule() const;
    void validate() const;
};

/// Sets one field by its name. Throws ConfigError for unknown keys or values
/// that do not parse.
void set_config_value(PipelineConfig& cfg, std::string_view key, std::string_view value);

/// `key = value` lines; blank lines and lines starting with '#' are skipped.
PipelineConfig parse_config(std::string_view text, PipelineConfig base = {});
PipelineConfig load_config(const std::filesystem::path& path);
std::string to_text(const PipelineConfig& cfg);

enum class SceneLayout { split, blocks };

struct SceneSpec {
    std::size_t channels = 1;
    std::size_t height = 96;
    std::size_t width = 96;
    SceneLayout layout = SceneLayout::split;
    double smooth_fraction = 2.0 / 3.0;  // split: leading columns; blocks: probability a block is smooth
    std::size_t block = 16;
    double smooth_amplitude = 1.0;
    double texture_std = 1.6;
    std::uint64_t seed = 0;
};

struct DegradeSpec {
    double blur_sigma = 1.5;
    double noise_sigma = 0.05;
    std::size_t factor = 2;
    std::uint64_t seed = 1;
};

struct SyntheticScene {
    LatentGrid hr;
    LatentGrid labels;  // 1 x h x w; 1 marks textured cells
    LatentGrid lr;
    SceneSpec spec;
    DegradeSpec degrade;
};

/// Low-frequency sinusoidal background everywhere, plus a sum of random
/// high-frequency sinusoids in the textured regions.
LatentGrid render_scene(const SceneSpec& spec, LatentGrid* labels = nullptr);
SyntheticScene make_scene(const SceneSpec& spec, const DegradeSpec& degrade);

/// Separable Gaussian blur with replicated edges.
LatentGrid gaussian_blur(const LatentGrid& image, double sigma);

/// Blur, keep every factor-th sample, add N(0, noise_sigma^2) noise.
LatentGrid synth_degrade(const LatentGrid& hr, double blur_sigma, double noise_sigma, std::size_t factor,
                         std::uint64_t seed);

LatentGrid upsample_nearest(const LatentGrid& image, std::size_t factor);

/// Average pooling by d; identity when d == 1.
LatentGrid encode(const LatentGrid& image, std::size_t d);
/// Nearest-neighbour expansion by d; identity when d == 1.
LatentGrid decode(const LatentGrid& latent, std::size_t d);

/// Non-overlapping (when stride == patch_size) windows in row-major order,
/// with the last window on each axis clamped inside the image.
std::vector<LatentGrid> tile_patches(const LatentGrid& image, std::size_t patch_size, std::size_t stride);

RandomProjectionExtractor make_extractor(const PipelineConfig& cfg, std::size_t channels);

struct SrModels {
    const models::GrmParams* grm = nullptr;
    const models::Denoiser* denoiser = nullptr;
    const TextureMemory* memory = nullptr;        // optional texture prompts
    const TextureExtractor* extractor = nullptr;  // required with `memory`
};

enum class SamplingMode { pgs, unified };

struct SrResult {
    LatentGrid sr;
    LatentGrid coarse;  // GRM feature estimate, latent scale
    ConfidenceMap confidence;
    QuantifiedMap qmap;
    PgsReport report;
    std::size_t degenerate_queries = 0;
};

/// encode -> GRM -> Qmap -> decompose -> retrieval -> PGS -> recompose ->
/// decode -> color normalization. Errors carry the failing stage name.
SrResult superresolve(const PipelineConfig& cfg, const SrModels& models, const LatentGrid& lr,
                      SamplingMode mode = SamplingMode::pgs);

struct BenchmarkResult {
    PgsReport pgs;
    PgsReport unified;
    double mse_pgs = 0.0;
    double mse_unified = 0.0;
    double mse_coarse = 0.0;
    int repeats = 0;
};

/// PGS and unified sampling on identical seeds (seed, seed + 1, ...). MSE is
/// measured against the scene's ground truth and averaged over repeats.
BenchmarkResult benchmark(const PipelineConfig& cfg, const SrModels& models, const SyntheticScene& scene, int repeats);
std::string to_text(const BenchmarkResult& result);

struct SweepPoint {
    GroupSetting setting;
    std::size_t nfe = 0;
    double mse = 0.0;
};

/// Runs every patch with each (tau, steps) in turn.
std::vector<SweepPoint> sweep(const PipelineConfig& cfg, const SrModels& models, const SyntheticScene& scene,
                              const std::vector<GroupSetting>& settings, int repeats);
std::string to_text(const std::vector<SweepPoint>& points);

/// Random aligned crops of (input, target) pairs for GRM training.
models::GrmSampler make_grm_sampler(std::vector<models::GrmExample> pairs, std::size_t crop);

/// The GRM training pair for a scene: (encode(upsample(lr)), encode(hr)).
models::GrmExample grm_pair(const SyntheticScene& scene, std::size_t downsample);

/// Random patch crops of the given latents, prompted from `memory` when set.
/// `memory` and `extractor` must outlive the sampler.
models::DiTSampler make_dit_sampler(std::vector<LatentGrid> latents, std::size_t patch_size,
                                    const TextureMemory* memory, const TextureExtractor* extractor, std::size_t topk);

}  // namespace patchscaler
