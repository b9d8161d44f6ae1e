// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "patchscaler/models/denoiser.hpp"
#include "patchscaler/models/patch_dit.hpp"
#include "patchscaler/pgs.hpp"
#include "patchscaler/rtm.hpp"
#include "patchscaler/schedule.hpp"

using namespace patchscaler;

namespace {

std::vector<float> random_points(std::size_t n, std::size_t dim, std::uint64_t seed, bool normalize) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> nd;
    std::vector<float> out(n * dim);
    for (float& v : out) v = nd(rng);
    if (normalize) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < dim; ++j) s += static_cast<double>(out[i * dim + j]) * out[i * dim + j];
            for (std::size_t j = 0; j < dim; ++j) out[i * dim + j] = static_cast<float>(out[i * dim + j] / std::sqrt(s));
        }
    }
    return out;
}

LatentGrid normal_grid(GridShape shape, std::mt19937_64& rng) {
    std::normal_distribution<float> nd;
    LatentGrid g(shape);
    for (float& v : g.data()) v = nd(rng);
    return g;
}

void BM_RetrieveTopK(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    const std::size_t k = static_cast<std::size_t>(state.range(1));
    TextureMemory mem;
    mem.key_dim = 32;
    mem.value_shape = {1, 1, 1};
    mem.keys = random_points(n, 32, 1, true);
    mem.values.assign(n, LatentGrid(1, 1, 1));
    const std::vector<float> query = random_points(1, 32, 2, true);
    for (auto _ : state) benchmark::DoNotOptimize(retrieve_topk(mem, query, k));
}
BENCHMARK(BM_RetrieveTopK)->Args({2000, 4})->Args({2000, 16})->Args({20000, 4});

void BM_FarthestPointSample(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    const std::size_t m = static_cast<std::size_t>(state.range(1));
    const std::vector<float> pts = random_points(n, 32, 3, false);
    for (auto _ : state) benchmark::DoNotOptimize(farthest_point_sample(pts, 32, m, 0));
}
BENCHMARK(BM_FarthestPointSample)->Args({1000, 200})->Args({4000, 500});

void BM_PatchDiTForward(benchmark::State& state) {
    const models::PatchDiT dit(models::init_patch_dit({}, 1));
    std::mt19937_64 rng(4);
    const LatentGrid x = normal_grid({1, 16, 16}, rng);
    RetrievalResult prompt;
    const auto k = static_cast<std::size_t>(state.range(0));
    for (std::size_t i = 0; i < k; ++i) {
        prompt.indices.push_back(i);
        prompt.similarities.push_back(0.9f);
        prompt.priors.push_back(normal_grid({1, 16, 16}, rng));
    }
    const auto bound = dit.bind_prompt(k > 0 ? &prompt : nullptr);
    for (auto _ : state) benchmark::DoNotOptimize(bound(x, 500));
}
BENCHMARK(BM_PatchDiTForward)->Arg(0)->Arg(4);

void BM_Sampling(benchmark::State& state) {
    const bool adaptive = state.range(0) != 0;
    const NoiseSchedule s = build_linear_schedule(1000, 1e-4, 0.02);
    const models::PatchDiT dit(models::init_patch_dit({}, 1));
    std::mt19937_64 rng(5);
    std::vector<LatentGrid> patches;
    QuantifiedMap q;
    for (int i = 0; i < 12; ++i) {
        patches.push_back(normal_grid({1, 16, 16}, rng));
        q.labels.push_back(i < 6 ? GroupLabel::simple : i < 9 ? GroupLabel::medium : GroupLabel::hard);
    }
    std::size_t nfe = 0;
    for (auto _ : state) {
        const PgsResult r = adaptive ? run_pgs(dit, s, patches, q, {}, {}, 1) : compare_unified(dit, s, patches, 20, {}, 1);
        nfe = r.report.nfe_total;
        benchmark::DoNotOptimize(r.patches.data());
    }
    state.counters["nfe"] = static_cast<double>(nfe);
}
BENCHMARK(BM_Sampling)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
