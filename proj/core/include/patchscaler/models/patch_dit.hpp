// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "patchscaler/models/denoiser.hpp"
#include "patchscaler/models/params.hpp"

namespace patchscaler::models {

struct PatchDiTConfig {
    std::size_t channels = 1;
    std::size_t patch_size = 16;
    std::size_t token_size = 4;  // side of the square sub-patch carried by one token
    std::size_t width = 64;
    std::size_t depth = 2;
    std::size_t heads = 4;
    std::size_t ff_mult = 2;

    std::size_t tokens() const noexcept { return (patch_size / token_size) * (patch_size / token_size); }
    std::size_t token_dim() const noexcept { return channels * token_size * token_size; }
    std::size_t prompt_dim() const noexcept { return channels * patch_size * patch_size; }

    /// Throws ConfigError on inconsistent sizes.
    void validate() const;
};

struct CrossAttentionWeights {
    Matrix query, key, value, output;  // width x width
};

struct DiTBlockParams {
    Matrix sa_query, sa_key, sa_value, sa_output;
    CrossAttentionWeights cross;
    Matrix scale_w, scale_b;  // time embedding -> per-dimension cross-attention scale
    Matrix ff_w1, ff_b1, ff_w2, ff_b2;
};

struct PatchDiTParams {
    PatchDiTConfig config;
    Matrix embed_w, embed_b, position;
    Matrix time_w1, time_b1, time_w2, time_b2;
    Matrix prompt_w, prompt_b;
    std::vector<DiTBlockParams> blocks;
    Matrix mod_scale_w, mod_scale_b, mod_shift_w, mod_shift_b;
    Matrix out_w, out_b;

    /// All-zero parameters with shapes from `config`.
    static PatchDiTParams zeros(const PatchDiTConfig& config);

    std::vector<NamedParam> parameters();
    std::vector<NamedConstParam> parameters() const;
};

PatchDiTParams init_patch_dit(const PatchDiTConfig& config, std::uint64_t seed);

Checkpoint to_checkpoint(const PatchDiTParams& params);
PatchDiTParams patch_dit_from_checkpoint(const Checkpoint& ckpt);

/// Sinusoidal embedding: entries [0, dim/2) are sin(t w_i), the rest cos(t w_i),
/// with w_i = 10000^(-i / (dim/2)). Throws ConfigError for odd `dim`.
RowVector time_embed(int t, std::size_t dim);

/// Per-dimension time scale used by a block's cross-attention.
RowVector cross_attention_scale(const PatchDiTParams& params, std::size_t block, int t);

/// Prompt tokens: row k is (flatten(prior_k) W_p + b_p) * similarity_k.
Matrix encode_prompt(const PatchDiTParams& params, const RetrievalResult& prompt);

/// tokens + scale (elementwise per dimension) * MultiHeadAttention(tokens -> prompt_tokens).
Matrix cross_attend(const Matrix& tokens, const Matrix& prompt_tokens, const RowVector& scale,
                    const CrossAttentionWeights& w, std::size_t heads);

/// x_t patch -> L x token_dim matrix of sub-patch tokens in row-major order.
Matrix patchify(const LatentGrid& patch, const PatchDiTConfig& config);
LatentGrid unpatchify(const Matrix& tokens, const PatchDiTConfig& config);

/// Time-independent part of the prompt path, computed once per patch.
struct PromptContext {
    Matrix flat;                  // K x prompt_dim
    Eigen::VectorXd similarities; // K
    Matrix tokens;                // K x width
    std::vector<Matrix> keys;     // per block, K x width
    std::vector<Matrix> values;   // per block, K x width
};

PromptContext make_prompt_context(const PatchDiTParams& params, const RetrievalResult& prompt);

/// x0 prediction for one patch.
LatentGrid denoise_patchdit(const PatchDiTParams& params, const LatentGrid& x_t, int t, const RetrievalResult* prompt);

/// Mean squared error between the x0 prediction for (x_t, t) and `x0`.
/// When `grads` is non-null the parameter gradient, scaled by `grad_scale`,
/// is added to it.
double patch_dit_loss(const PatchDiTParams& params, const LatentGrid& x_t, int t, const LatentGrid& x0,
                      const RetrievalResult* prompt, PatchDiTParams* grads, double grad_scale = 1.0);

class PatchDiT final : public Denoiser {
public:
    explicit PatchDiT(PatchDiTParams params);

    const PatchDiTParams& params() const noexcept { return m_params; }

    LatentGrid denoise(const LatentGrid& x_t, int t, const RetrievalResult* prompt) const override;
    BoundFn bind_prompt(const RetrievalResult* prompt) const override;

private:
    PatchDiTParams m_params;
};

/// One training pair: the clean patch and an optional texture prompt.
struct DiTExample {
    LatentGrid x0;
    std::optional<RetrievalResult> prompt;
};

struct DiTTrainOptions {
    TrainOptions train;
    int batch = 8;
    int max_step = 1000;  // t is drawn uniformly from [1, max_step]
};

using DiTSampler = std::function<DiTExample(std::mt19937_64&)>;

/// x0-prediction training with t uniform and eps ~ N(0, I).
TrainResult train_patch_dit(PatchDiTParams& params, const NoiseSchedule& schedule, const DiTSampler& sampler,
                            const DiTTrainOptions& options);

}  // namespace patchscaler::models
