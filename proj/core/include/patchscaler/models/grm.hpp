// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "patchscaler/confidence.hpp"
#include "patchscaler/grid.hpp"
#include "patchscaler/models/params.hpp"

namespace patchscaler::models {

/// Zero-padded 3x3 convolution trunk with SiLU activations, followed by a
/// residual feature head and a sigmoid confidence head.
struct GrmConfig {
    std::size_t channels = 1;
    std::size_t features = 12;
    std::size_t layers = 3;

    void validate() const;
};

struct ConvLayer {
    Matrix weight;  // out x (in * 9), column index (in, ky, kx)
    Matrix bias;    // out x 1
};

struct GrmParams {
    GrmConfig config;
    std::vector<ConvLayer> trunk;
    ConvLayer feature_head;
    ConvLayer confidence_head;

    static GrmParams zeros(const GrmConfig& config);

    std::vector<NamedParam> parameters();
    std::vector<NamedConstParam> parameters() const;
};

GrmParams init_grm(const GrmConfig& config, std::uint64_t seed);

Checkpoint to_checkpoint(const GrmParams& params);
GrmParams grm_from_checkpoint(const Checkpoint& ckpt);

struct GrmOutput {
    LatentGrid features;      // coarse HR estimate, same shape as the input
    ConfidenceMap confidence; // 1 x h x w, in [kMinConfidence, 1]
};

/// `input` is the LR latent already brought to the HR grid.
GrmOutput grm_restore(const GrmParams& params, const LatentGrid& input);

/// Confidence-driven loss of the restoration against `target`. When `grads`
/// is non-null the gradient, scaled by `grad_scale`, is added to it.
double grm_loss(const GrmParams& params, const LatentGrid& input, const LatentGrid& target, const LossParams& loss,
                GrmParams* grads, double grad_scale = 1.0);

struct GrmExample {
    LatentGrid input;
    LatentGrid target;
};

using GrmSampler = std::function<GrmExample(std::mt19937_64&)>;

struct GrmTrainOptions {
    TrainOptions train;
    int batch = 4;
    LossParams loss;
};

TrainResult train_grm(GrmParams& params, const GrmSampler& sampler, const GrmTrainOptions& options);

}  // namespace patchscaler::models
