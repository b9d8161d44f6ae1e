// SPDX-License-Identifier: Apache-2.0
#include "patchscaler/rtm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "binary_io.hpp"
#include "patchscaler/error.hpp"

namespace patchscaler {

namespace {

void require_input(const TextureExtractor& t, const LatentGrid& patch) {
    if (patch.shape() != t.input_shape()) throw ShapeError("patch shape does not match the texture extractor input");
}

std::vector<float> project(std::span<const float> weights, std::span<const float> input, std::size_t dim) {
    std::vector<float> out(dim);
    const std::size_t n = input.size();
    for (std::size_t r = 0; r < dim; ++r) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(weights[r * n + i]) * input[i];
        out[r] = static_cast<float>(acc);
    }
    return out;
}

double squared_distance(std::span<const float> a, std::span<const float> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        acc += d * d;
    }
    return acc;
}

}  // namespace

std::vector<float> IdentityExtractor::extract(const LatentGrid& patch) const {
    require_input(*this, patch);
    return patch.values();
}

LinearExtractor::LinearExtractor(GridShape input, std::size_t dim, std::vector<float> weights)
    : m_input(input), m_dim(dim), m_weights(std::move(weights)) {
    if (m_dim == 0 || m_weights.size() != m_dim * m_input.size()) throw ShapeError("linear extractor weight shape");
}

std::vector<float> LinearExtractor::extract(const LatentGrid& patch) const {
    require_input(*this, patch);
    return project(m_weights, patch.data(), m_dim);
}

RandomProjectionExtractor::RandomProjectionExtractor(GridShape input, std::size_t dim, std::uint64_t seed)
    : m_input(input), m_dim(dim) {
    if (m_dim == 0 || m_input.size() == 0) throw ConfigError("random projection extractor needs positive dimensions");
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> normal(0.0f, 1.0f);
    const float scale = 1.0f / std::sqrt(static_cast<float>(m_input.size()));
    m_weights.resize(m_dim * m_input.size());
    for (float& w : m_weights) w = normal(rng) * scale;
    m_bias.resize(m_dim);
    for (float& b : m_bias) b = 0.1f * normal(rng);
}

std::vector<float> RandomProjectionExtractor::extract(const LatentGrid& patch) const {
    require_input(*this, patch);
    std::vector<float> f = project(m_weights, patch.data(), m_dim);
    for (std::size_t i = 0; i < m_dim; ++i) f[i] = std::tanh(f[i] + m_bias[i]);
    return f;
}

std::vector<float> extract_query(const TextureExtractor& t, const LatentGrid& patch) {
    std::vector<float> f = t.extract(patch);
    double norm_sq = 0.0;
    for (float v : f) norm_sq += static_cast<double>(v) * v;
    const double norm = std::sqrt(norm_sq);
    if (!(norm > 0.0) || !std::isfinite(norm)) throw DegenerateQueryError("texture feature has zero or non-finite norm");
    for (float& v : f) v = static_cast<float>(v / norm);
    return f;
}

std::vector<std::size_t> farthest_point_sample(std::span<const float> points, std::size_t dim, std::size_t m,
                                               std::size_t start) {
    if (dim == 0 || points.size() % dim != 0) throw ShapeError("point matrix length is not a multiple of dim");
    const std::size_t n = points.size() / dim;
    if (m == 0) throw ConfigError("farthest point sampling needs m >= 1");
    if (m > n) throw ConfigError("cannot sample " + std::to_string(m) + " points from " + std::to_string(n));
    if (start >= n) throw ConfigError("start index " + std::to_string(start) + " out of range");

    auto row = [&](std::size_t i) { return points.subspan(i * dim, dim); };

    std::vector<std::size_t> selected{start};
    selected.reserve(m);
    std::vector<bool> taken(n, false);
    taken[start] = true;
    std::vector<double> min_dist(n);
    for (std::size_t i = 0; i < n; ++i) min_dist[i] = squared_distance(row(i), row(start));

    while (selected.size() < m) {
        std::size_t best = n;
        double best_dist = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!taken[i] && min_dist[i] > best_dist) {
                best = i;
                best_dist = min_dist[i];
            }
        }
        selected.push_back(best);
        taken[best] = true;
        for (std::size_t i = 0; i < n; ++i) {
            if (!taken[i]) min_dist[i] = std::min(min_dist[i], squared_distance(row(i), row(best)));
        }
    }
    return selected;
}

TextureMemory build_memory(std::span<const LatentGrid> patches, const TextureExtractor& t, std::size_t m,
                           std::size_t start) {
    if (patches.empty()) throw ConfigError("texture memory needs at least one source patch");
    const GridShape shape = patches.front().shape();
    if (shape.height != shape.width) throw ShapeError("texture memory values must be square patches");

    const std::size_t dim = t.dim();
    std::vector<float> all_keys;
    all_keys.reserve(patches.size() * dim);
    for (const LatentGrid& p : patches) {
        if (p.shape() != shape) throw ShapeError("texture memory source patches must share one shape");
        const std::vector<float> k = extract_query(t, p);
        all_keys.insert(all_keys.end(), k.begin(), k.end());
    }

    const std::vector<std::size_t> chosen = farthest_point_sample(all_keys, dim, m, start);
    TextureMemory mem{dim, shape, {}, {}};
    mem.keys.reserve(m * dim);
    mem.values.reserve(m);
    for (std::size_t idx : chosen) {
        mem.keys.insert(mem.keys.end(), all_keys.begin() + idx * dim, all_keys.begin() + (idx + 1) * dim);
        mem.values.push_back(patches[idx]);
    }
    return mem;
}

RetrievalResult retrieve_topk(const TextureMemory& mem, std::span<const float> query, std::size_t k) {
    if (query.size() != mem.key_dim) throw ShapeError("query dimension does not match memory keys");
    if (k == 0 || k > mem.size()) {
        throw ConfigError("top-k must satisfy 1 <= k <= " + std::to_string(mem.size()) + " (got " + std::to_string(k) +
                          ")");
    }
    const std::size_t n = mem.size();
    std::vector<double> sims(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto key = mem.key(i);
        double dot = 0.0;
        for (std::size_t d = 0; d < mem.key_dim; ++d) dot += static_cast<double>(key[d]) * query[d];
        sims[i] = std::clamp(dot, -1.0, 1.0);
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) { return sims[a] > sims[b] || (sims[a] == sims[b] && a < b); });

    RetrievalResult out;
    for (std::size_t r = 0; r < k; ++r) {
        out.indices.push_back(order[r]);
        out.similarities.push_back(static_cast<float>(sims[order[r]]));
        out.priors.push_back(mem.values[order[r]]);
    }
    return out;
}

RetrievalResult retrieve_topk(const TextureMemory& mem, const LatentGrid& patch, const TextureExtractor& t,
                              std::size_t k) {
    if (t.dim() != mem.key_dim) throw ShapeError("extractor dimension does not match memory keys");
    return retrieve_topk(mem, extract_query(t, patch), k);
}

void save_memory(const TextureMemory& mem, const std::filesystem::path& path) {
    const GridShape vs = mem.value_shape;
    if (vs.height != vs.width) throw ShapeError("texture memory values must be square patches");
    if (mem.keys.size() != mem.size() * mem.key_dim) throw ShapeError("texture memory key matrix has wrong length");
    detail::ByteWriter w;
    w.put_bytes("RTM1");
    w.put_u32(static_cast<std::uint32_t>(mem.size()));
    w.put_u32(static_cast<std::uint32_t>(mem.key_dim));
    w.put_u32(static_cast<std::uint32_t>(vs.channels));
    w.put_u32(static_cast<std::uint32_t>(vs.height));
    for (float k : mem.keys) w.put_f32(k);
    for (const LatentGrid& v : mem.values) {
        if (v.shape() != vs) throw ShapeError("texture memory value has inconsistent shape");
        for (float x : v.data()) w.put_f32(x);
    }
    detail::write_file(path, w.buffer());
}

TextureMemory load_memory(const std::filesystem::path& path) {
    detail::ByteReader r(detail::read_file(path), path.string());
    r.require(4);
    if (r.get_bytes(4) != "RTM1") throw IoError(IoErrorKind::magic_mismatch, path.string() + ": expected RTM1");
    const std::size_t n = r.get_u32();
    const std::size_t dim = r.get_u32();
    const std::size_t channels = r.get_u32();
    const std::size_t side = r.get_u32();
    if (n == 0 || dim == 0 || channels == 0 || side == 0) {
        throw IoError(IoErrorKind::dimension_mismatch, path.string() + ": zero dimension in header");
    }
    const std::size_t expected = 4 * (n * dim + n * channels * side * side);
    if (r.remaining() < expected) {
        throw IoError(IoErrorKind::truncated, path.string() + ": payload shorter than header declares");
    }
    if (r.remaining() > expected) {
        throw IoError(IoErrorKind::dimension_mismatch, path.string() + ": payload longer than header declares");
    }

    TextureMemory mem{dim, GridShape{channels, side, side}, {}, {}};
    mem.keys.resize(n * dim);
    for (float& k : mem.keys) k = r.get_f32();
    mem.values.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<float> data(mem.value_shape.size());
        for (float& v : data) v = r.get_f32();
        mem.values.emplace_back(mem.value_shape, std::move(data));
    }
    return mem;
}

}  // namespace patchscaler
