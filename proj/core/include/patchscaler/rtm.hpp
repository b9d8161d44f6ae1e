// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "patchscaler/grid.hpp"

namespace patchscaler {

/// Deterministic map from a patch to a feature vector. Implementations must be
/// safe to call concurrently.
class TextureExtractor {
public:
    virtual ~TextureExtractor() = default;

    virtual std::size_t dim() const noexcept = 0;
    virtual GridShape input_shape() const noexcept = 0;
    virtual std::vector<float> extract(const LatentGrid& patch) const = 0;
};

/// Flattens the patch; feature dimension is channels * height * width.
class IdentityExtractor final : public TextureExtractor {
public:
    explicit IdentityExtractor(GridShape input) : m_input(input) {}

    std::size_t dim() const noexcept override { return m_input.size(); }
    GridShape input_shape() const noexcept override { return m_input; }
    std::vector<float> extract(const LatentGrid& patch) const override;

private:
    GridShape m_input;
};

/// Bias-free linear projection; `weights` is dim x input-size, row-major.
class LinearExtractor final : public TextureExtractor {
public:
    LinearExtractor(GridShape input, std::size_t dim, std::vector<float> weights);

    std::size_t dim() const noexcept override { return m_dim; }
    GridShape input_shape() const noexcept override { return m_input; }
    std::vector<float> extract(const LatentGrid& patch) const override;

private:
    GridShape m_input;
    std::size_t m_dim;
    std::vector<float> m_weights;
};

/// Seeded random projection followed by tanh: tanh(W x + b). Stands in for a
/// pretrained texture classifier's feature trunk.
class RandomProjectionExtractor final : public TextureExtractor {
public:
    RandomProjectionExtractor(GridShape input, std::size_t dim, std::uint64_t seed);

    std::size_t dim() const noexcept override { return m_dim; }
    GridShape input_shape() const noexcept override { return m_input; }
    std::vector<float> extract(const LatentGrid& patch) const override;

private:
    GridShape m_input;
    std::size_t m_dim;
    std::vector<float> m_weights;
    std::vector<float> m_bias;
};

/// L2-normalized feature of `patch`. Throws DegenerateQueryError when the
/// feature has zero (or non-finite) norm.
std::vector<float> extract_query(const TextureExtractor& t, const LatentGrid& patch);

/// Paired unit-norm keys and texture patch values.
struct TextureMemory {
    std::size_t key_dim = 0;
    GridShape value_shape;
    std::vector<float> keys;          // n x key_dim, row-major
    std::vector<LatentGrid> values;   // n patches of value_shape

    std::size_t size() const noexcept { return values.size(); }
    std::span<const float> key(std::size_t i) const noexcept { return {keys.data() + i * key_dim, key_dim}; }
};

struct RetrievalResult {
    std::vector<std::size_t> indices;
    std::vector<float> similarities;  // descending
    std::vector<LatentGrid> priors;

    std::size_t size() const noexcept { return indices.size(); }
};

/// Greedy max-min selection over the rows of an n x dim matrix. Starts at
/// `start`, then repeatedly takes the unselected row farthest (Euclidean) from
/// the selected set; ties go to the lowest index.
std::vector<std::size_t> farthest_point_sample(std::span<const float> points, std::size_t dim, std::size_t m,
                                               std::size_t start);

/// Keys every patch, then keeps the `m` entries chosen by farthest point
/// sampling over the key vectors, in selection order.
TextureMemory build_memory(std::span<const LatentGrid> patches, const TextureExtractor& t, std::size_t m,
                           std::size_t start = 0);

/// Top-K entries by inner product between stored keys and the normalized
/// query, descending, ties by lowest index.
RetrievalResult retrieve_topk(const TextureMemory& mem, const LatentGrid& patch, const TextureExtractor& t,
                              std::size_t k);

/// Same ranking for an already-normalized query vector.
RetrievalResult retrieve_topk(const TextureMemory& mem, std::span<const float> query, std::size_t k);

// File layout (little-endian): "RTM1", u32 n, u32 D, u32 c, u32 V, n*D key
// floats, n*c*V*V value floats.
void save_memory(const TextureMemory& mem, const std::filesystem::path& path);
TextureMemory load_memory(const std::filesystem::path& path);

}  // namespace patchscaler
