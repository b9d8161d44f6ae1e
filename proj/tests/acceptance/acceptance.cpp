// SPDX-License-Identifier: Apache-2.0
// Acceptance run: one PASS/FAIL line per criterion and per property.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "patchscaler/colornorm.hpp"
#include "patchscaler/confidence.hpp"
#include "patchscaler/error.hpp"
#include "patchscaler/io.hpp"
#include "patchscaler/models/denoiser.hpp"
#include "patchscaler/models/grm.hpp"
#include "patchscaler/models/patch_dit.hpp"
#include "patchscaler/pgs.hpp"
#include "patchscaler/pipeline.hpp"
#include "patchscaler/rtm.hpp"
#include "patchscaler/schedule.hpp"
#include "patchscaler/tiling.hpp"

namespace fs = std::filesystem;
using namespace patchscaler;
using namespace patchscaler::testing;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

// Training time of cached fixtures used by the running check.
double g_charged = 0.0;

template <typename T>
class Fixture {
public:
    explicit Fixture(std::function<T()> make) : m_make(std::move(make)) {}

    const T& get() {
        if (!m_value) {
            const auto t0 = Clock::now();
            m_value = std::make_unique<T>(m_make());
            m_seconds = seconds_since(t0);
        } else {
            g_charged += m_seconds;
        }
        return *m_value;
    }

private:
    std::function<T()> m_make;
    std::unique_ptr<T> m_value;
    double m_seconds = 0.0;
};

const NoiseSchedule& default_schedule() {
    static const NoiseSchedule s = build_linear_schedule(1000, 1e-4, 0.02);
    return s;
}

std::vector<SyntheticScene> grm_training_scenes() {
    std::vector<SyntheticScene> out;
    for (int i = 0; i < 8; ++i) {
        SceneSpec s;
        s.layout = SceneLayout::blocks;
        s.smooth_fraction = 0.6;
        s.seed = 100 + i;
        DegradeSpec d;
        d.seed = 200 + i;
        out.push_back(make_scene(s, d));
    }
    return out;
}

Fixture<models::GrmParams> trained_grm([] {
    std::vector<models::GrmExample> pairs;
    for (const SyntheticScene& s : grm_training_scenes()) pairs.push_back(grm_pair(s, 1));
    models::GrmParams grm = models::init_grm({}, 5);
    models::GrmTrainOptions opt;
    opt.train = {2000, 5e-3, 3};
    models::train_grm(grm, make_grm_sampler(std::move(pairs), 24), opt);
    return grm;
});

Fixture<RandomProjectionExtractor> extractor([] { return make_extractor(PipelineConfig{}, 1); });

Fixture<TextureMemory> texture_memory([] {
    std::vector<LatentGrid> src;
    for (int i = 0; i < 8; ++i) {
        SceneSpec s;
        s.layout = SceneLayout::blocks;
        s.smooth_fraction = 0.5;
        s.seed = 500 + i;
        for (LatentGrid& p : tile_patches(render_scene(s), 16, 8)) src.push_back(std::move(p));
    }
    return build_memory(src, extractor.get(), 200);
});

Fixture<models::PatchDiT> trained_dit([] {
    std::vector<LatentGrid> latents;
    for (const SyntheticScene& s : grm_training_scenes()) latents.push_back(s.hr);
    models::PatchDiTParams params = models::init_patch_dit({}, 11);
    models::DiTTrainOptions opt;
    opt.train = {1000, 2e-3, 0};
    const PipelineConfig cfg;
    models::train_patch_dit(params, default_schedule(),
                            make_dit_sampler(std::move(latents), 16, &texture_memory.get(), &extractor.get(), cfg.topk),
                            opt);
    return models::PatchDiT(std::move(params));
});

SyntheticScene benchmark_scene() {
    SceneSpec s;
    s.seed = 77;
    DegradeSpec d;
    d.seed = 78;
    return make_scene(s, d);
}

SrModels full_models(const models::Denoiser* denoiser) {
    return {&trained_grm.get(), denoiser, &texture_memory.get(), &extractor.get()};
}

// ---------------------------------------------------------------------------
// Criteria

Outcome schedule_marginals() {
    const NoiseSchedule& s = default_schedule();
    std::mt19937_64 rng(101);
    const LatentGrid x0({1, 100, 100}, 1.0f);
    bool ok = true;
    std::string detail;
    for (int t : {10, 100, 500, 1000}) {
        LatentGrid iterated = x0;
        for (int k = 1; k <= t; ++k) iterated = forward_step(s, iterated, k, normal_grid(x0.shape(), rng));
        const LatentGrid closed = forward_sample(s, x0, t, normal_grid(x0.shape(), rng));
        const Moments a = moments(iterated.data()), b = moments(closed.data());
        const double n = static_cast<double>(a.n);
        const double se_mean = std::sqrt(a.variance / n + b.variance / n);
        const double se_var = std::sqrt(2.0 * a.variance * a.variance / (n - 1) + 2.0 * b.variance * b.variance / (n - 1));
        const double zm = std::abs(a.mean - b.mean) / se_mean, zv = std::abs(a.variance - b.variance) / se_var;
        ok = ok && zm <= 3.0 && zv <= 3.0;
        detail += fmt("t=%d z_mean=%.2f z_var=%.2f; ", t, zm, zv);
    }
    return {ok, detail};
}

Outcome nfe_efficiency() {
    const PipelineConfig cfg;
    const SyntheticScene scene = benchmark_scene();
    models::CountingDenoiser counter(trained_dit.get());
    const SrModels m = full_models(&counter);
    const SrResult pgs = superresolve(cfg, m, scene.lr, SamplingMode::pgs);
    const std::size_t pgs_calls = counter.calls();
    counter.reset();
    const SrResult uni = superresolve(cfg, m, scene.lr, SamplingMode::unified);
    const std::size_t uni_calls = counter.calls();
    const auto& r = pgs.report;
    const std::size_t total = r.patches[0] + r.patches[1] + r.patches[2];
    const double simple_share = static_cast<double>(r.patches[0]) / static_cast<double>(total);
    std::size_t expected = 0;
    for (GroupLabel g : kAllGroups) expected += r.patches[group_index(g)] * static_cast<std::size_t>(cfg.groups[g].steps);
    const bool arithmetic = r.nfe_total == pgs_calls && r.nfe_total == expected && r.nfe_unified == 20 * total &&
                            uni.report.nfe_total == uni_calls && uni_calls == r.nfe_unified &&
                            r.nfe[0] + r.nfe[1] + r.nfe[2] == r.nfe_total;
    const double ratio = static_cast<double>(r.nfe_total) / static_cast<double>(uni_calls);
    const bool ok = simple_share >= 0.4 && ratio <= 0.7 && arithmetic;
    return {ok, fmt("S/M/H=%zu/%zu/%zu simple=%.1f%% nfe %zu vs unified %zu ratio=%.4f calls=%zu/%zu arithmetic=%s",
                    r.patches[0], r.patches[1], r.patches[2], 100.0 * simple_share, r.nfe_total, uni_calls, ratio,
                    pgs_calls, uni_calls, arithmetic ? "exact" : "MISMATCH")};
}

struct ShortcutSetup {
    std::vector<LatentGrid> x0;
    std::vector<LatentGrid> y0;
};

ShortcutSetup shortcut_setup(double delta_std, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    ShortcutSetup s;
    for (int i = 0; i < 100; ++i) {
        const LatentGrid x = normal_grid({1, 16, 16}, rng);
        LatentGrid y = x;
        if (delta_std > 0.0) {
            const LatentGrid d = normal_grid(x.shape(), rng, 0.0f, static_cast<float>(delta_std));
            for (std::size_t k = 0; k < y.size(); ++k) y.data()[k] += d.data()[k];
        }
        s.x0.push_back(x);
        s.y0.push_back(y);
    }
    return s;
}

double group_mse(const models::Denoiser& d, const ShortcutSetup& s, int tau, int n, std::uint64_t seed) {
    const auto out = run_group(d, default_schedule(), s.y0, tau, n, {}, seed);
    double m = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) m += mean_squared_error(out[i], s.x0[i]) / static_cast<double>(out.size());
    return m;
}

Outcome tradeoff() {
    const models::GaussianOracleDenoiser oracle({0.0, 1.0}, default_schedule());
    const ShortcutSetup clean = shortcut_setup(0.0, 301);
    const ShortcutSetup shifted = shortcut_setup(2.0, 302);
    double c[3], f[3];
    const int taus[3] = {100, 400, 1000};
    for (int i = 0; i < 3; ++i) {
        c[i] = group_mse(oracle, clean, taus[i], 8, 303);
        f[i] = group_mse(oracle, shifted, taus[i], 8, 303);
    }
    const bool near = c[1] <= 1.05 * c[2];
    const bool far = f[0] >= 1.2 * f[2];
    return {near && far, fmt("delta=0: mse(100)=%.4f mse(400)=%.4f mse(1000)=%.4f [400 <= 1.05x1000: %s]; "
                             "delta~N(0,4): mse(100)=%.4f mse(400)=%.4f mse(1000)=%.4f [100 >= 1.2x1000: %s]",
                             c[0], c[1], c[2], near ? "yes" : "no", f[0], f[1], f[2], far ? "yes" : "no")};
}

std::vector<float> unit_rows(std::size_t n, std::size_t dim, std::mt19937_64& rng) {
    std::normal_distribution<float> nd;
    std::vector<float> out(n * dim);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            out[i * dim + j] = nd(rng);
            s += static_cast<double>(out[i * dim + j]) * out[i * dim + j];
        }
        for (std::size_t j = 0; j < dim; ++j) out[i * dim + j] = static_cast<float>(out[i * dim + j] / std::sqrt(s));
    }
    return out;
}

Outcome retrieval_exactness() {
    std::mt19937_64 rng(401);
    std::size_t compared = 0, mismatches = 0;
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        TextureMemory mem;
        mem.key_dim = 32;
        mem.value_shape = {1, 1, 1};
        mem.keys = unit_rows(2000, 32, rng);
        for (int i = 0; i < 2000; ++i) mem.values.emplace_back(GridShape{1, 1, 1}, static_cast<float>(i));
        const std::vector<float> q = unit_rows(1, 32, rng);
        for (std::size_t k : {1, 4, 16}) {
            const RetrievalResult r = retrieve_topk(mem, q, k);
            const auto ref = topk_bruteforce(mem.keys, 32, q, k);
            ++compared;
            bool same = r.size() == k;
            for (std::size_t i = 0; same && i < k; ++i) {
                worst = std::max(worst, std::abs(r.similarities[i] - ref[i].similarity));
                same = r.indices[i] == ref[i].index && std::abs(r.similarities[i] - ref[i].similarity) <= 1e-6 &&
                       r.priors[i] == mem.values[ref[i].index];
            }
            if (!same) ++mismatches;
        }
    }
    return {mismatches == 0, fmt("%zu queries, %zu mismatches, max similarity error %.2e", compared, mismatches, worst)};
}

Outcome fps_exactness() {
    std::mt19937_64 rng(501);
    std::size_t mismatches = 0, lattice = 0, dupes = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 256)(rng);
        const std::size_t dim = std::uniform_int_distribution<std::size_t>(1, 8)(rng);
        const std::size_t m = std::uniform_int_distribution<std::size_t>(1, std::min<std::size_t>(64, n))(rng);
        const std::size_t start = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
        std::vector<float> pts(n * dim);
        const int kind = trial % 3;
        if (kind == 0) {
            std::normal_distribution<float> nd;
            for (float& v : pts) v = nd(rng);
        } else if (kind == 1) {
            ++lattice;
            std::uniform_int_distribution<int> cell(-3, 3);
            for (float& v : pts) v = static_cast<float>(cell(rng));
        } else {
            ++dupes;
            const std::size_t distinct = std::max<std::size_t>(1, n / 4);
            std::normal_distribution<float> nd;
            std::vector<float> base(distinct * dim);
            for (float& v : base) v = nd(rng);
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t b = std::uniform_int_distribution<std::size_t>(0, distinct - 1)(rng);
                std::copy_n(base.begin() + static_cast<std::ptrdiff_t>(b * dim), dim,
                            pts.begin() + static_cast<std::ptrdiff_t>(i * dim));
            }
        }
        const auto got = farthest_point_sample(pts, dim, m, start);
        const auto ref = fps_bruteforce(pts, dim, m, start);
        const bool unique = std::set<std::size_t>(got.begin(), got.end()).size() == got.size();
        if (got != ref || got.front() != start || !unique) ++mismatches;
    }
    return {mismatches == 0, fmt("100 instances (%zu lattice, %zu with duplicates), %zu mismatches", lattice, dupes,
                                 mismatches)};
}

Outcome tiling_identity() {
    std::mt19937_64 rng(601);
    double worst = 0.0;
    std::size_t clamped = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t v = std::uniform_int_distribution<std::size_t>(1, 16)(rng);
        const std::size_t overlap = std::uniform_int_distribution<std::size_t>(0, v - 1)(rng);
        const std::size_t c = std::uniform_int_distribution<std::size_t>(1, 3)(rng);
        const std::size_t h = std::uniform_int_distribution<std::size_t>(v, 48)(rng);
        const std::size_t w = std::uniform_int_distribution<std::size_t>(v, 48)(rng);
        const LatentGrid g = random_grid({c, h, w}, rng, -3.0f, 3.0f);
        const Decomposition d = decompose(g, v, overlap);
        const std::size_t stride = v - overlap;
        if ((h - v) % stride != 0 || (w - v) % stride != 0) ++clamped;
        for (BlendMode mode : {BlendMode::uniform, BlendMode::raised_cosine}) {
            worst = std::max(worst, max_abs_difference(recompose(d.patches, d.grid, BlendWeights(d.grid, mode)), g));
        }
    }
    return {worst <= 1e-6, fmt("200 cases x 2 blend modes (%zu with clamped edges), max abs error %.2e", clamped, worst)};
}

Outcome gradient_integrity() {
    std::mt19937_64 rng(701);
    std::string detail;
    double worst = 0.0;

    models::GrmParams grm = models::init_grm({}, 702);
    models::GrmParams grm_grads = models::GrmParams::zeros(grm.config);
    const LatentGrid in = normal_grid({1, 10, 10}, rng);
    LatentGrid target = in;
    const LatentGrid noise = normal_grid(in.shape(), rng, 0.0f, 0.7f);
    for (std::size_t i = 0; i < target.size(); ++i) target.data()[i] += noise.data()[i];
    const LossParams loss{1.0, 1.0};
    models::grm_loss(grm, in, target, loss, &grm_grads);
    const GradCheck g1 = check_gradients(grm.parameters(), grm_grads.parameters(),
                                         [&] { return models::grm_loss(grm, in, target, loss, nullptr); }, 24, 703);
    worst = std::max(worst, g1.max_rel_error);
    detail += fmt("GRM %zu entries max rel %.2e; ", g1.checked, g1.max_rel_error);

    models::PatchDiTParams dit = models::init_patch_dit({}, 704);
    for (auto& b : dit.blocks) {
        b.scale_b.setConstant(0.5);
    }
    models::PatchDiTParams dit_grads = models::PatchDiTParams::zeros(dit.config);
    const LatentGrid x0 = normal_grid({1, 16, 16}, rng);
    const LatentGrid xt = normal_grid({1, 16, 16}, rng);
    RetrievalResult prompt;
    for (std::size_t k = 0; k < 4; ++k) {
        prompt.indices.push_back(k);
        prompt.similarities.push_back(0.9f - 0.1f * static_cast<float>(k));
        prompt.priors.push_back(normal_grid({1, 16, 16}, rng));
    }
    models::patch_dit_loss(dit, xt, 400, x0, &prompt, &dit_grads);
    const GradCheck g2 = check_gradients(
        dit.parameters(), dit_grads.parameters(),
        [&] { return models::patch_dit_loss(dit, xt, 400, x0, &prompt, nullptr); }, 12, 705);
    worst = std::max(worst, g2.max_rel_error);
    detail += fmt("Patch-DiT %zu entries over %zu tensors max rel %.2e", g2.checked, dit.parameters().size(),
                  g2.max_rel_error);
    if (worst > 1e-4) detail += " worst: " + (g1.max_rel_error > g2.max_rel_error ? g1.worst : g2.worst);
    return {worst <= 1e-4, detail};
}

Outcome confidence_minimizer() {
    std::mt19937_64 rng(801);
    std::uniform_real_distribution<double> ue(0.01, 4.0), ueta(0.05, 4.0);
    double worst = 0.0, worst_closed = 0.0;
    std::size_t clipped = 0;
    for (int i = 0; i < 1000; ++i) {
        const double e = ue(rng), eta = ueta(rng);
        const LossParams p{1.0, eta};
        const std::vector<double> y{e}, x{0.0};
        std::vector<double> gy(1), gc(1);
        const double numeric = golden_minimize(
            [&](double c) {
                const std::vector<double> cv{c};
                return confidence_loss_with_grad(y, x, cv, 1, p, gy, gc);
            },
            1e-12, 1.0);
        const double expected = std::min(1.0, eta / (e * e));
        if (expected == 1.0) ++clipped;
        worst = std::max(worst, std::abs(numeric - expected));
        worst_closed = std::max(worst_closed, std::abs(optimal_confidence(e * e, eta) - expected));
    }
    return {worst <= 1e-6 && worst_closed <= 1e-12,
            fmt("1000 pairs (%zu clipped at 1), max |numeric - eta/e^2| %.2e, optimal_confidence error %.1e", clipped,
                worst, worst_closed)};
}

Outcome qmap_fidelity() {
    const models::GrmParams& grm = trained_grm.get();
    const PipelineConfig cfg;
    std::size_t smooth = 0, smooth_ok = 0, textured = 0, textured_ok = 0, mixed = 0;
    for (int i = 0; i < 6; ++i) {
        SceneSpec s;
        s.layout = SceneLayout::blocks;
        s.smooth_fraction = 0.5;
        s.seed = 900 + i;
        DegradeSpec d;
        d.seed = 950 + i;
        const SyntheticScene scene = make_scene(s, d);
        const models::GrmOutput out = models::grm_restore(grm, encode(upsample_nearest(scene.lr, cfg.scale), 1));
        const PatchGrid grid = make_patch_grid(out.features.shape(), cfg.patch_size, cfg.overlap);
        const QuantifiedMap q = build_qmap(out.confidence, grid, cfg.thresholds());
        for (std::size_t p = 0; p < grid.count(); ++p) {
            const double share = patch_mean_naive(scene.labels, grid.anchors[p].top, grid.anchors[p].left, cfg.patch_size);
            if (share == 0.0) {
                ++smooth;
                if (q.labels[p] != GroupLabel::hard) ++smooth_ok;
            } else if (share >= 0.5) {
                ++textured;
                if (q.labels[p] != GroupLabel::simple) ++textured_ok;
            } else {
                ++mixed;
            }
        }
    }
    const double sr = static_cast<double>(smooth_ok) / static_cast<double>(smooth);
    const double tr = static_cast<double>(textured_ok) / static_cast<double>(textured);
    return {sr >= 0.9 && tr >= 0.9 && smooth > 0 && textured > 0,
            fmt("smooth in S+M %zu/%zu (%.1f%%), textured in M+H %zu/%zu (%.1f%%), %zu mixed patches unscored", smooth_ok,
                smooth, 100.0 * sr, textured_ok, textured, 100.0 * tr, mixed)};
}

Outcome end_to_end_quality() {
    const PipelineConfig cfg;
    const BenchmarkResult b = benchmark(cfg, full_models(&trained_dit.get()), benchmark_scene(), 2);
    const double ratio = b.mse_pgs / b.mse_unified;
    return {b.mse_pgs <= 1.05 * b.mse_unified,
            fmt("mse pgs %.4f, unified %.4f (ratio %.3f), coarse %.4f, nfe ratio %.4f over %d repeats", b.mse_pgs,
                b.mse_unified, ratio, b.mse_coarse, b.pgs.nfe_ratio, b.repeats)};
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_bytes(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary);
    out << bytes;
}

std::optional<IoErrorKind> io_kind(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const IoError& e) {
        return e.kind();
    }
    return std::nullopt;
}

Outcome persistence() {
    const fs::path dir = fs::temp_directory_path() / "patchscaler_acceptance";
    fs::create_directories(dir);
    std::mt19937_64 rng(1101);
    std::string detail;
    bool ok = true;

    std::vector<LatentGrid> patches;
    for (int i = 0; i < 60; ++i) patches.push_back(normal_grid({1, 16, 16}, rng));
    const TextureMemory mem = build_memory(patches, make_extractor(PipelineConfig{}, 1), 25);
    const fs::path rtm = dir / "memory.rtm";
    save_memory(mem, rtm);
    const TextureMemory mem2 = load_memory(rtm);
    const fs::path rtm2 = dir / "memory2.rtm";
    save_memory(mem2, rtm2);
    const bool rtm_ok = mem2.keys == mem.keys && mem2.values == mem.values && read_bytes(rtm) == read_bytes(rtm2);
    ok = ok && rtm_ok;

    models::GrmParams grm = models::init_grm({}, 1102);
    models::PatchDiTParams dit = models::init_patch_dit({}, 1103);
    const fs::path grm_path = dir / "grm.psck", dit_path = dir / "dit.psck";
    models::save_checkpoint(models::to_checkpoint(grm), grm_path);
    models::save_checkpoint(models::to_checkpoint(dit), dit_path);
    const models::Checkpoint grm_back = models::load_checkpoint(grm_path);
    const models::Checkpoint dit_back = models::load_checkpoint(dit_path);
    const fs::path dit_path2 = dir / "dit2.psck";
    models::save_checkpoint(models::to_checkpoint(models::patch_dit_from_checkpoint(dit_back)), dit_path2);
    const bool ck_ok = grm_back == models::to_checkpoint(grm) && dit_back == models::to_checkpoint(dit) &&
                       read_bytes(dit_path) == read_bytes(dit_path2) &&
                       models::to_checkpoint(models::grm_from_checkpoint(grm_back)) == grm_back;
    ok = ok && ck_ok;

    const LatentGrid g = normal_grid({3, 7, 5}, rng);
    const fs::path grid_path = dir / "grid.psg";
    save_grid(g, grid_path);
    const bool grid_ok = load_grid(grid_path) == g;
    ok = ok && grid_ok;
    detail += fmt("round trips rtm=%s checkpoints=%s grid=%s; ", rtm_ok ? "ok" : "FAIL", ck_ok ? "ok" : "FAIL",
                  grid_ok ? "ok" : "FAIL");

    struct Case {
        const char* name;
        fs::path path;
        std::function<void(const fs::path&)> load;
    };
    const std::vector<Case> cases{
        {"rtm", rtm, [](const fs::path& p) { load_memory(p); }},
        {"checkpoint", dit_path, [](const fs::path& p) { models::load_checkpoint(p); }},
        {"grid", grid_path, [](const fs::path& p) { load_grid(p); }},
    };
    for (const Case& c : cases) {
        const std::string bytes = read_bytes(c.path);
        const fs::path bad = dir / "corrupt.bin";
        std::string magic = bytes;
        magic[0] = static_cast<char>(magic[0] ^ 0x5a);
        write_bytes(bad, magic);
        const auto k1 = io_kind([&] { c.load(bad); });
        write_bytes(bad, bytes.substr(0, bytes.size() - 7));
        const auto k2 = io_kind([&] { c.load(bad); });
        write_bytes(bad, bytes.substr(0, bytes.size() / 2));
        const auto k3 = io_kind([&] { c.load(bad); });
        const bool case_ok = k1 == IoErrorKind::magic_mismatch && k2 == IoErrorKind::truncated &&
                             k3 == IoErrorKind::truncated;
        ok = ok && case_ok;
        detail += fmt("%s magic->%s truncated->%s; ", c.name, k1 ? std::string(to_string(*k1)).c_str() : "none",
                      k2 ? std::string(to_string(*k2)).c_str() : "none");
    }
    fs::remove_all(dir);
    return {ok, detail};
}

// ---------------------------------------------------------------------------
// Properties

Outcome schedule_tables() {
    std::mt19937_64 rng(1201);
    double worst = 0.0;
    bool monotone = true;
    for (int trial = 0; trial < 50; ++trial) {
        const int steps = std::uniform_int_distribution<int>(1, 2000)(rng);
        const double b0 = std::uniform_real_distribution<double>(1e-5, 1e-3)(rng);
        const double b1 = std::uniform_real_distribution<double>(b0, 0.03)(rng);
        const NoiseSchedule s = build_linear_schedule(steps, b0, b1);
        for (int t = 1; t <= steps; ++t) {
            const long double ref = alpha_bar_reference(steps, b0, b1, t);
            worst = std::max(worst, static_cast<double>(std::abs(s.alpha_bar(t) - ref) / ref));
            monotone = monotone && s.alpha_bar(t) < s.alpha_bar(t - 1);
        }
    }
    return {worst <= 1e-6 && monotone, fmt("50 random schedules, max rel alpha_bar error %.2e, strictly decreasing: %s",
                                           worst, monotone ? "yes" : "no")};
}

Outcome reverse_inverse() {
    const NoiseSchedule& s = default_schedule();
    std::mt19937_64 rng(1301);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const int t = std::uniform_int_distribution<int>(2, 1000)(rng);
        const int t_next = std::uniform_int_distribution<int>(1, t - 1)(rng);
        const LatentGrid x0 = normal_grid({1, 8, 8}, rng);
        const LatentGrid eps = normal_grid(x0.shape(), rng);
        const LatentGrid next = reverse_step(s, forward_sample(s, x0, t, eps), x0, t, t_next);
        worst = std::max(worst, max_abs_difference(next, forward_sample(s, x0, t_next, eps)));
    }
    return {worst <= 1e-4, fmt("200 random (t, t_next), max elementwise error %.2e", worst)};
}

Outcome ladder_shape() {
    std::size_t checked = 0;
    bool ok = true;
    auto check = [&](int tau, int n) {
        const SubstepLadder l = make_substeps(tau, n);
        ++checked;
        bool good = l.transitions() == n && l.steps.front() == tau && l.steps.back() == 0;
        for (int i = 0; good && i < n; ++i) good = l.steps[i] > l.steps[i + 1];
        ok = ok && good;
    };
    for (int tau = 1; tau <= 200; ++tau) {
        for (int n = 1; n <= tau; ++n) check(tau, n);
    }
    std::mt19937_64 rng(1401);
    for (int i = 0; i < 5000; ++i) {
        const int tau = std::uniform_int_distribution<int>(201, 1000)(rng);
        check(tau, std::uniform_int_distribution<int>(1, tau)(rng));
    }
    return {ok, fmt("%zu ladders (exhaustive to tau=200, random to 1000)", checked)};
}

Outcome coverage_partition() {
    std::mt19937_64 rng(1501);
    bool covered = true, partition = true;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t v = std::uniform_int_distribution<std::size_t>(1, 12)(rng);
        const std::size_t overlap = std::uniform_int_distribution<std::size_t>(0, v - 1)(rng);
        const std::size_t h = std::uniform_int_distribution<std::size_t>(v, 40)(rng);
        const std::size_t w = std::uniform_int_distribution<std::size_t>(v, 40)(rng);
        const PatchGrid grid = make_patch_grid({1, h, w}, v, overlap);
        std::vector<int> count(h * w, 0);
        for (const PatchAnchor& a : grid.anchors) {
            for (std::size_t y = a.top; y < a.top + v; ++y) {
                for (std::size_t x = a.left; x < a.left + v; ++x) ++count[y * w + x];
            }
        }
        covered = covered && std::all_of(count.begin(), count.end(), [](int c) { return c >= 1; });
        QuantifiedMap q;
        for (std::size_t i = 0; i < grid.count(); ++i) {
            q.labels.push_back(static_cast<GroupLabel>(std::uniform_int_distribution<int>(0, 2)(rng)));
        }
        const GroupPartition p = partition_by_group(grid, q);
        std::vector<int> seen(grid.count(), 0);
        for (std::size_t g = 0; g < 3; ++g) {
            for (std::size_t idx : p[g]) {
                ++seen[idx];
                partition = partition && q.labels[idx] == static_cast<GroupLabel>(g);
            }
            partition = partition && std::is_sorted(p[g].begin(), p[g].end());
        }
        partition = partition && std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; });
    }
    return {covered && partition,
            fmt("200 random grids: every cell covered %s, groups disjoint and exhaustive %s", covered ? "yes" : "no",
                partition ? "yes" : "no")};
}

Outcome quantize_partition() {
    std::mt19937_64 rng(1601);
    std::size_t mismatches = 0, boundary = 0;
    for (int trial = 0; trial < 2000; ++trial) {
        const double g2 = std::uniform_real_distribution<double>(0.0, 0.99)(rng);
        const double g1 = std::uniform_real_distribution<double>(g2 + 1e-3, 1.0)(rng);
        const Thresholds th{g1, g2};
        std::vector<double> probes{0.0, 1.0, g1, g2, std::nextafter(g1, 2.0), std::nextafter(g2, 2.0),
                                   std::uniform_real_distribution<double>(0.0, 1.0)(rng)};
        boundary += 6;
        for (double a : probes) {
            if (a > 1.0) continue;
            if (quantize(a, th) != quantize_reference(a, g1, g2)) ++mismatches;
        }
    }
    std::mt19937_64 rng2(1602);
    std::size_t qmaps = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t v = std::uniform_int_distribution<std::size_t>(2, 10)(rng2);
        const std::size_t overlap = std::uniform_int_distribution<std::size_t>(0, v - 1)(rng2);
        const std::size_t h = std::uniform_int_distribution<std::size_t>(v, 30)(rng2);
        const std::size_t w = std::uniform_int_distribution<std::size_t>(v, 30)(rng2);
        const LatentGrid c = random_grid({1, h, w}, rng2, 0.5f, 1.0f);
        const PatchGrid grid = make_patch_grid(c.shape(), v, overlap);
        const Thresholds th{0.8, 0.7};
        const QuantifiedMap q = build_qmap(c, grid, th);
        for (std::size_t p = 0; p < grid.count(); ++p) {
            ++qmaps;
            const double avg = patch_mean_naive(c, grid.anchors[p].top, grid.anchors[p].left, v);
            if (q.labels[p] != quantize_reference(avg, th.gamma1, th.gamma2)) ++mismatches;
        }
    }
    return {mismatches == 0, fmt("%zu boundary probes + random values, %zu qmap patches vs brute force, %zu mismatches",
                                 boundary, qmaps, mismatches)};
}

Outcome memory_keys() {
    std::mt19937_64 rng(1701);
    std::vector<LatentGrid> patches;
    for (int i = 0; i < 400; ++i) patches.push_back(normal_grid({1, 16, 16}, rng, 0.0f, 0.5f + 0.01f * i));
    const RandomProjectionExtractor ex = make_extractor(PipelineConfig{}, 1);
    const TextureMemory mem = build_memory(patches, ex, 100);
    double norm_err = 0.0;
    for (std::size_t i = 0; i < mem.size(); ++i) {
        double n = 0.0;
        for (float v : mem.key(i)) n += static_cast<double>(v) * v;
        norm_err = std::max(norm_err, std::abs(std::sqrt(n) - 1.0));
    }
    bool in_range = true, descending = true;
    for (int i = 0; i < 200; ++i) {
        const RetrievalResult r = retrieve_topk(mem, normal_grid({1, 16, 16}, rng), ex, 16);
        for (std::size_t k = 0; k < r.size(); ++k) {
            in_range = in_range && r.similarities[k] >= -1.0f - 1e-6f && r.similarities[k] <= 1.0f + 1e-6f;
            if (k > 0) descending = descending && r.similarities[k] <= r.similarities[k - 1];
        }
    }
    return {norm_err <= 1e-5 && in_range && descending,
            fmt("max |‖key‖ - 1| %.2e, similarities in [-1, 1]: %s, descending: %s", norm_err, in_range ? "yes" : "no",
                descending ? "yes" : "no")};
}

Outcome fps_max_min() {
    std::mt19937_64 rng(1801);
    bool ok = true;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(5, 200)(rng);
        const std::size_t dim = 3;
        std::vector<float> pts(n * dim);
        std::normal_distribution<float> nd;
        for (float& v : pts) v = nd(rng);
        const std::size_t m = std::min<std::size_t>(n, 30);
        const auto sel = farthest_point_sample(pts, dim, m, 0);
        auto dist = [&](std::size_t a, std::size_t b) {
            double s = 0.0;
            for (std::size_t k = 0; k < dim; ++k) {
                const double d = static_cast<double>(pts[a * dim + k]) - pts[b * dim + k];
                s += d * d;
            }
            return s;
        };
        for (std::size_t step = 1; step < m; ++step) {
            auto min_to_set = [&](std::size_t i) {
                double best = 1e300;
                for (std::size_t j = 0; j < step; ++j) best = std::min(best, dist(i, sel[j]));
                return best;
            };
            const double chosen = min_to_set(sel[step]);
            for (std::size_t i = 0; i < n; ++i) {
                if (std::find(sel.begin(), sel.begin() + static_cast<std::ptrdiff_t>(step), i) !=
                    sel.begin() + static_cast<std::ptrdiff_t>(step)) {
                    continue;
                }
                ok = ok && min_to_set(i) <= chosen;
            }
        }
        ok = ok && sel.front() == 0;
    }
    return {ok, "every selection maximizes the min distance to the chosen set; start always first"};
}

Outcome denoiser_contract() {
    std::mt19937_64 rng(1901);
    const models::PatchDiT dit(models::init_patch_dit({}, 1902));
    const models::GaussianOracleDenoiser oracle({0.3, 1.7}, default_schedule());
    const models::GrmParams grm = models::init_grm({}, 1903);
    bool ok = true;
    for (int i = 0; i < 20; ++i) {
        const int t = std::uniform_int_distribution<int>(1, 1000)(rng);
        const LatentGrid x = normal_grid({1, 16, 16}, rng, 0.0f, 3.0f);
        for (const models::Denoiser* d : {static_cast<const models::Denoiser*>(&dit),
                                          static_cast<const models::Denoiser*>(&oracle)}) {
            const LatentGrid a = d->denoise(x, t, nullptr);
            ok = ok && a.shape() == x.shape() && a.all_finite() && d->denoise(x, t, nullptr) == a;
        }
        const models::GrmOutput g1 = models::grm_restore(grm, x), g2 = models::grm_restore(grm, x);
        ok = ok && g1.features == g2.features && g1.confidence == g2.confidence && g1.features.all_finite();
    }
    return {ok, "Patch-DiT, Gaussian oracle and GRM on 20 random inputs each"};
}

Outcome zero_scale_identity() {
    std::mt19937_64 rng(2001);
    models::PatchDiTParams params = models::init_patch_dit({}, 2002);
    for (auto& b : params.blocks) {
        b.scale_w.setZero();
        b.scale_b.setZero();
    }
    const models::CrossAttentionWeights& w = params.blocks[0].cross;
    const models::Matrix tokens = models::random_matrix(16, 64, 1.0, rng);
    const models::Matrix prompt = models::random_matrix(4, 64, 1.0, rng);
    const bool direct = models::cross_attend(tokens, prompt, cross_attention_scale(params, 0, 500), w, 4) == tokens;
    auto make_prompt = [&] {
        RetrievalResult r;
        for (std::size_t k = 0; k < 4; ++k) {
            r.indices.push_back(k);
            r.similarities.push_back(0.8f);
            r.priors.push_back(normal_grid({1, 16, 16}, rng));
        }
        return r;
    };
    const RetrievalResult p1 = make_prompt(), p2 = make_prompt();
    const LatentGrid x = normal_grid({1, 16, 16}, rng);
    const LatentGrid a = models::denoise_patchdit(params, x, 500, &p1);
    const bool through = a == models::denoise_patchdit(params, x, 500, &p2) &&
                         a == models::denoise_patchdit(params, x, 500, nullptr);
    return {direct && through, fmt("cross_attend exact identity: %s; Patch-DiT output independent of prompt: %s",
                                   direct ? "yes" : "no", through ? "yes" : "no")};
}

Outcome bayes_oracle_bound() {
    const NoiseSchedule& s = default_schedule();
    const double mu = 0.5, var = 1.0;
    auto sampler = [&](std::mt19937_64& rng) {
        return models::DiTExample{normal_grid({1, 16, 16}, rng, static_cast<float>(mu), static_cast<float>(std::sqrt(var))),
                                  std::nullopt};
    };
    models::PatchDiTParams params = models::init_patch_dit({}, 11);
    models::DiTTrainOptions opt;
    opt.train = {300, 2e-3, 0};
    const models::TrainResult tr = models::train_patch_dit(params, s, sampler, opt);
    double irreducible = 0.0;
    for (int t = 1; t <= 1000; ++t) irreducible += oracle_posterior_mse(var, s.alpha_bar(t)) / 1000.0;
    double final_loss = 0.0;
    for (std::size_t i = tr.loss_trace.size() - 50; i < tr.loss_trace.size(); ++i) final_loss += tr.loss_trace[i] / 50.0;

    std::mt19937_64 rng(2101);
    std::uniform_int_distribution<int> td(1, 1000);
    const models::PatchDiT dit(params);
    const models::GaussianOracleDenoiser oracle({mu, var}, s);
    double m_dit = 0.0, m_oracle = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const LatentGrid x0 = sampler(rng).x0;
        const int t = td(rng);
        const LatentGrid xt = forward_sample(s, x0, t, normal_grid(x0.shape(), rng));
        m_dit += mean_squared_error(dit.denoise(xt, t, nullptr), x0) / n;
        m_oracle += mean_squared_error(oracle.denoise(xt, t, nullptr), x0) / n;
    }
    const double ratio = m_dit / m_oracle;
    return {ratio >= 0.99 && ratio <= 1.2,
            fmt("test mse Patch-DiT %.4f vs oracle %.4f (ratio %.3f, %d test patches); final train loss %.4f vs "
                "irreducible %.4f (%.3f)",
                m_dit, m_oracle, ratio, n, final_loss, irreducible, final_loss / irreducible)};
}

Outcome grm_training_converges() {
    std::vector<models::GrmExample> pairs;
    for (int i = 0; i < 4; ++i) {
        SceneSpec s;
        s.layout = SceneLayout::blocks;
        s.smooth_fraction = 1.0;
        s.seed = 300 + i;
        DegradeSpec d;
        d.noise_sigma = 0.3;
        d.seed = 400 + i;
        pairs.push_back(grm_pair(make_scene(s, d), 1));
    }
    models::GrmParams grm = models::init_grm({}, 5);
    models::GrmTrainOptions opt;
    opt.train = {2000, 5e-3, 3};
    const models::TrainResult tr = models::train_grm(grm, make_grm_sampler(pairs, 24), opt);
    double first = 0.0, last = 0.0;
    for (std::size_t i = 0; i < 50; ++i) {
        first += tr.loss_trace[i] / 50.0;
        last += tr.loss_trace[tr.loss_trace.size() - 1 - i] / 50.0;
    }
    return {last < 0.5 * first, fmt("2000 steps on blur + noise(0.3) pairs: loss %.4f -> %.4f (%.3fx)", first, last,
                                     last / first)};
}

Outcome nfe_accounting() {
    const NoiseSchedule& s = default_schedule();
    const models::GaussianOracleDenoiser oracle({0.0, 1.0}, s);
    models::CountingDenoiser counter(oracle);
    std::mt19937_64 rng(2201);
    bool ok = true;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 12)(rng);
        std::vector<LatentGrid> patches;
        QuantifiedMap q;
        for (std::size_t i = 0; i < n; ++i) {
            patches.push_back(normal_grid({1, 8, 8}, rng));
            q.labels.push_back(static_cast<GroupLabel>(std::uniform_int_distribution<int>(0, 2)(rng)));
        }
        GroupConfig cfg;
        int tau = 0, steps = 1;
        for (auto& g : cfg.groups) {
            tau = std::uniform_int_distribution<int>(std::max(tau, 1), 1000)(rng);
            steps = std::uniform_int_distribution<int>(steps, std::min(tau, 30))(rng);
            g = {tau, steps};
        }
        cfg.unified_steps = std::uniform_int_distribution<int>(1, 30)(rng);
        counter.reset();
        const PgsResult r = run_pgs(counter, s, patches, q, cfg, {}, 7, trial % 2 == 1);
        ok = ok && counter.calls() == r.report.nfe_total &&
             r.report.nfe_unified == n * static_cast<std::size_t>(cfg.unified_steps);
        counter.reset();
        const PgsResult u = compare_unified(counter, s, patches, cfg.unified_steps, {}, 7);
        ok = ok && counter.calls() == u.report.nfe_total && u.report.nfe_ratio == 1.0;
    }
    return {ok, "20 random group configs and qmaps, serial and parallel, PGS and unified"};
}

Outcome group_independence() {
    const NoiseSchedule& s = default_schedule();
    const models::PatchDiT dit(models::init_patch_dit({}, 2301));
    std::mt19937_64 rng(2302);
    std::vector<LatentGrid> patches;
    QuantifiedMap q;
    for (int i = 0; i < 9; ++i) {
        patches.push_back(normal_grid({1, 16, 16}, rng));
        q.labels.push_back(static_cast<GroupLabel>(i % 3));
    }
    const GroupConfig cfg;
    const PgsResult serial = run_pgs(dit, s, patches, q, cfg, {}, 5, false);
    const PgsResult parallel = run_pgs(dit, s, patches, q, cfg, {}, 5, true);
    const PatchGrid grid = make_patch_grid({1, 16, 16 * 9}, 16, 0);
    const GroupPartition part = partition_by_group(grid, q);
    std::vector<LatentGrid> reversed(patches.size());
    for (int g = 2; g >= 0; --g) {
        std::vector<LatentGrid> members;
        for (std::size_t idx : part[g]) members.push_back(patches[idx]);
        const GroupSetting set = cfg.groups[g];
        const auto out = run_group(dit, s, members, set.tau, set.steps, {}, 5, part[g]);
        for (std::size_t i = 0; i < out.size(); ++i) reversed[part[g][i]] = out[i];
    }
    const bool ok = serial.patches == parallel.patches && serial.patches == reversed;
    return {ok, "serial, threaded and reversed group order give bit-identical patches"};
}

Outcome monotone_budget() {
    const NoiseSchedule& s = default_schedule();
    const models::GaussianOracleDenoiser oracle({0.0, 1.0}, s);
    const ShortcutSetup setup = shortcut_setup(0.0, 2401);
    bool ok = true;
    std::string detail;
    for (int tau : {1000, 400}) {
        const auto ref = run_group(oracle, s, setup.y0, tau, tau, {}, 9);
        double prev = 1e300;
        detail += fmt("tau=%d:", tau);
        for (int n : {1, 2, 5, 8, 10, 20, 50}) {
            const auto out = run_group(oracle, s, setup.y0, tau, n, {}, 9);
            double to_ref = 0.0, to_x0 = 0.0;
            for (std::size_t i = 0; i < out.size(); ++i) {
                to_ref += mean_squared_error(out[i], ref[i]) / static_cast<double>(out.size());
                to_x0 += mean_squared_error(out[i], setup.x0[i]) / static_cast<double>(out.size());
            }
            ok = ok && to_ref <= prev * 1.001;
            prev = to_ref;
            detail += fmt(" N=%d %.4f (x0 %.3f)", n, to_ref, to_x0);
        }
        detail += "; ";
    }

    PipelineConfig cfg;
    cfg.denoiser = "oracle";
    const models::GrmParams grm = models::init_grm({}, 2402);
    const SyntheticScene scene = benchmark_scene();
    const SrModels m{&grm, &oracle, nullptr, nullptr};
    const auto points = sweep(cfg, m, scene, {{1000, 5}, {1000, 10}, {1000, 20}}, 1);
    detail += "scene sweep, mse vs HR:";
    for (const SweepPoint& p : points) detail += fmt(" N=%d %.4f", p.setting.steps, p.mse);
    return {ok, detail};
}

Outcome shortcut_consistency() {
    const models::GaussianOracleDenoiser oracle({0.0, 1.0}, default_schedule());
    const ShortcutSetup clean = shortcut_setup(0.0, 2501);
    const double m400 = group_mse(oracle, clean, 400, 8, 2502);
    const double m1000 = group_mse(oracle, clean, 1000, 8, 2502);
    return {m400 <= m1000 + 1e-3, fmt("delta=0, paired seeds: mse(400)=%.4f mse(1000)=%.4f", m400, m1000)};
}

Outcome colornorm_properties() {
    std::mt19937_64 rng(2601);
    double idem = 0.0, detail_err = 0.0;
    for (int i = 0; i < 20; ++i) {
        const LatentGrid sr = normal_grid({2, 32, 24}, rng);
        const LatentGrid ref = normal_grid({2, 32, 24}, rng, 1.0f, 0.5f);
        const LatentGrid once = wavelet_color_normalize(sr, ref, 2);
        idem = std::max(idem, max_abs_difference(wavelet_color_normalize(once, ref, 2), once));
        const WaveletPyramid a = haar_forward(sr, 2), b = haar_forward(once, 2);
        for (std::size_t l = 0; l < 2; ++l) {
            detail_err = std::max({detail_err, max_abs_difference(a.levels[l].horizontal, b.levels[l].horizontal),
                                   max_abs_difference(a.levels[l].vertical, b.levels[l].vertical),
                                   max_abs_difference(a.levels[l].diagonal, b.levels[l].diagonal)});
        }
    }
    return {idem <= 1e-5 && detail_err <= 1e-5,
            fmt("idempotence error %.2e, detail band change %.2e", idem, detail_err)};
}

Outcome pipeline_properties() {
    PipelineConfig cfg;
    const SyntheticScene scene = benchmark_scene();
    models::CountingDenoiser counter(trained_dit.get());
    const SrModels m = full_models(&counter);
    const SrResult a = superresolve(cfg, m, scene.lr);
    const bool reconciled = counter.calls() == a.report.nfe_total;
    const SrResult b = superresolve(cfg, m, scene.lr);
    PipelineConfig threaded = cfg;
    threaded.parallel_groups = true;
    const SrResult c = superresolve(threaded, m, scene.lr);
    const bool deterministic = a.sr == b.sr && a.sr == c.sr;
    PipelineConfig plain = cfg;
    plain.color_normalize = false;
    const SrResult d = superresolve(plain, m, scene.lr);
    const WaveletPyramid pa = haar_forward(a.sr, cfg.color_levels), pd = haar_forward(d.sr, cfg.color_levels);
    double detail_err = 0.0;
    for (std::size_t l = 0; l < pa.levels.size(); ++l) {
        detail_err = std::max({detail_err, max_abs_difference(pa.levels[l].horizontal, pd.levels[l].horizontal),
                               max_abs_difference(pa.levels[l].vertical, pd.levels[l].vertical),
                               max_abs_difference(pa.levels[l].diagonal, pd.levels[l].diagonal)});
    }
    const double low_change = max_abs_difference(pa.low, pd.low);
    return {deterministic && reconciled && detail_err <= 1e-5,
            fmt("bit-identical reruns (serial and threaded): %s; report = counted calls: %s; colornorm off changes "
                "detail bands by %.2e, low band by %.3f",
                deterministic ? "yes" : "no", reconciled ? "yes" : "no", detail_err, low_change)};
}

struct Check {
    const char* id;
    const char* name;
    double budget;
    Outcome (*fn)();
};

}  // namespace

int main() {
    const std::vector<Check> checks{
        {"C1", "schedule: iterated steps match closed form", 10, schedule_marginals},
        {"C3", "truncation trade-off with the Gaussian oracle", 120, tradeoff},
        {"C4", "top-K retrieval equals exhaustive sort", 30, retrieval_exactness},
        {"C5", "farthest point sampling equals greedy oracle", 30, fps_exactness},
        {"C6", "decompose/recompose identity", 10, tiling_identity},
        {"C7", "analytic gradients match finite differences", 120, gradient_integrity},
        {"C8", "confidence loss minimizer", 5, confidence_minimizer},
        {"C11", "persistence round trips and corruption errors", 5, persistence},
        {"C9", "qmap fidelity on labelled scenes (incl. GRM training)", 300, qmap_fidelity},
        {"C2", "NFE efficiency on a mixed scene", 60, nfe_efficiency},
        {"C10", "PGS quality vs unified sampling", 120, end_to_end_quality},
        {"P-schedule", "alpha_bar product identity and monotonicity", 30, schedule_tables},
        {"P-reverse", "reverse step inverts the forward map", 10, reverse_inverse},
        {"P-ladder", "substep ladders strictly decreasing", 30, ladder_shape},
        {"P-tiling", "coverage and group partition", 10, coverage_partition},
        {"P-quantize", "quantize partition and qmap brute force", 10, quantize_partition},
        {"P-keys", "unit keys and bounded similarities", 10, memory_keys},
        {"P-fps", "max-min selection at every step", 30, fps_max_min},
        {"P-denoiser", "denoisers deterministic, shape-preserving, finite", 30, denoiser_contract},
        {"P-zero-scale", "zero time scale makes cross-attention the identity", 10, zero_scale_identity},
        {"P-oracle", "trained toy denoiser vs Bayes oracle", 120, bayes_oracle_bound},
        {"P-grm-train", "GRM training halves the confidence loss", 120, grm_training_converges},
        {"P-nfe", "NFE accounting matches instrumented calls", 60, nfe_accounting},
        {"P-groups", "group independence", 60, group_independence},
        {"P-budget", "monotone budget against the dense ladder", 120, monotone_budget},
        {"P-shortcut", "shortcut consistency at zero offset", 30, shortcut_consistency},
        {"P-colornorm", "color normalization idempotent, details kept", 10, colornorm_properties},
        {"P-pipeline", "determinism, stage isolation, call reconciliation", 60, pipeline_properties},
    };

    int failures = 0;
    for (const Check& c : checks) {
        g_charged = 0.0;
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = c.fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double elapsed = seconds_since(t0) + g_charged;
        const bool in_time = elapsed <= c.budget;
        const bool pass = o.pass && in_time;
        if (!pass) ++failures;
        std::printf("%s %-11s %-55s %7.2fs / %4.0fs%s | %s\n", pass ? "PASS" : "FAIL", c.id, c.name, elapsed, c.budget,
                    in_time ? "" : " OVER BUDGET", o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%zu checks, %d failed\n", checks.size(), failures);
    return failures == 0 ? 0 : 1;
}
