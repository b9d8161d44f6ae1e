// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace patchscaler::models {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

/// Parameters are stored in 64-bit matrices but always hold values that are
/// exactly representable in 32 bits, so checkpoints round-trip bit-identically.
struct NamedParam {
    std::string name;
    Matrix* value;
};

struct NamedConstParam {
    std::string name;
    const Matrix* value;
};

/// Rounds every entry to the nearest 32-bit float.
void snap_to_float(Matrix& m);

/// Zeroes every matrix in the list.
void zero_all(const std::vector<NamedParam>& params);

Matrix random_matrix(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Checkpoints: "PSCK", u32 version, u32 section count, then per section
// u32 name length, name bytes, u32 rows, u32 cols, rows*cols little-endian
// 32-bit floats in row-major order.

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointSection {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> data;

    friend bool operator==(const CheckpointSection&, const CheckpointSection&) = default;
};

struct Checkpoint {
    std::vector<CheckpointSection> sections;

    const CheckpointSection& section(const std::string& name) const;
    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

CheckpointSection to_section(const std::string& name, const Matrix& m);
/// Copies a section into `m`, which must already have the section's shape.
void from_section(const CheckpointSection& s, Matrix& m);

void append_params(Checkpoint& ckpt, const std::vector<NamedConstParam>& params);
void read_params(const Checkpoint& ckpt, const std::vector<NamedParam>& params);

// ---------------------------------------------------------------------------

struct AdamOptions {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

class Adam {
public:
    Adam(std::vector<NamedParam> params, AdamOptions options);

    /// Applies one update from `grads` (aligned with the parameter list) and
    /// snaps parameters back to 32-bit precision.
    void step(const std::vector<NamedParam>& grads);

private:
    std::vector<NamedParam> m_params;
    AdamOptions m_options;
    std::vector<Matrix> m_first;
    std::vector<Matrix> m_second;
    long m_step = 0;
};

struct TrainOptions {
    int steps = 1000;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
};

struct TrainResult {
    std::vector<double> loss_trace;
};

/// Fills the gradient buffers for one minibatch drawn from `rng` and returns
/// the minibatch loss.
using Objective = std::function<double(std::mt19937_64& rng)>;

/// Adam loop over `steps` minibatches. Throws NumericError, naming the step,
/// if the loss becomes non-finite.
TrainResult train_toy(const std::vector<NamedParam>& params, const std::vector<NamedParam>& grads,
                      const Objective& objective, const TrainOptions& options);

}  // namespace patchscaler::models
