// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "patchscaler/colornorm.hpp"
#include "patchscaler/error.hpp"
#include "patchscaler/io.hpp"
#include "patchscaler/models/denoiser.hpp"
#include "patchscaler/models/grm.hpp"
#include "patchscaler/models/patch_dit.hpp"
#include "patchscaler/pipeline.hpp"
#include "patchscaler/rtm.hpp"

namespace fs = std::filesystem;
using namespace patchscaler;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

/// Flags every subcommand accepts. Unset flags leave the config untouched.
struct SharedFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<double> gamma1;
    std::optional<double> gamma2;
    std::vector<int> tau;
    std::vector<int> steps;
    std::optional<std::size_t> patch_size;
    std::optional<std::size_t> overlap;
    std::optional<std::size_t> topk;
    std::string grm;
    std::string dit;
    std::string rtm;

    void attach(CLI::App* app) {
        app->add_option("--config", config, "key = value config file");
        app->add_option("--seed", seed, "run seed");
        app->add_option("--gamma1", gamma1, "Simple/Medium confidence threshold");
        app->add_option("--gamma2", gamma2, "Medium/Hard confidence threshold");
        app->add_option("--tau", tau, "intermediate steps s,m,h")->delimiter(',')->expected(3);
        app->add_option("--steps", steps, "sampling steps s,m,h")->delimiter(',')->expected(3);
        app->add_option("--patch-size", patch_size, "patch size V");
        app->add_option("--overlap", overlap, "patch overlap");
        app->add_option("--topk", topk, "texture prompts per patch");
        app->add_option("--grm", grm, "GRM checkpoint");
        app->add_option("--dit", dit, "Patch-DiT checkpoint");
        app->add_option("--rtm", rtm, "texture memory file");
    }

    PipelineConfig resolve() const {
        PipelineConfig cfg = config.empty() ? PipelineConfig{} : load_config(config);
        if (seed) cfg.seed = *seed;
        if (gamma1) cfg.gamma1 = *gamma1;
        if (gamma2) cfg.gamma2 = *gamma2;
        for (std::size_t i = 0; i < tau.size(); ++i) cfg.groups.groups[i].tau = tau[i];
        for (std::size_t i = 0; i < steps.size(); ++i) cfg.groups.groups[i].steps = steps[i];
        if (patch_size) cfg.patch_size = *patch_size;
        if (overlap) cfg.overlap = *overlap;
        if (topk) cfg.topk = *topk;
        if (!grm.empty()) cfg.grm_path = grm;
        if (!dit.empty()) cfg.dit_path = dit;
        if (!rtm.empty()) cfg.rtm_path = rtm;
        cfg.validate();
        return cfg;
    }
};

struct DataPair {
    std::string name;
    LatentGrid hr;
    LatentGrid lr;
};

/// Reads every <name>_hr.psg with its <name>_lr.psg sibling, sorted by name.
std::vector<DataPair> load_pairs(const fs::path& dir, bool need_lr) {
    if (!fs::is_directory(dir)) throw IoError(IoErrorKind::open_failed, dir.string() + " is not a directory");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string f = entry.path().filename().string();
        if (f.size() > 7 && f.ends_with("_hr.psg")) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError(IoErrorKind::open_failed, "no *_hr.psg files in " + dir.string());
    std::vector<DataPair> out;
    for (const fs::path& hr : files) {
        const std::string f = hr.filename().string();
        DataPair p{f.substr(0, f.size() - 7), load_grid(hr), {}};
        if (need_lr) p.lr = load_grid(dir / (p.name + "_lr.psg"));
        out.push_back(std::move(p));
    }
    return out;
}

struct LoadedModels {
    models::GrmParams grm;
    std::unique_ptr<models::Denoiser> denoiser;
    std::optional<TextureMemory> memory;
    std::optional<RandomProjectionExtractor> extractor;
    NoiseSchedule schedule;

    SrModels view() const {
        return {&grm, denoiser.get(), memory ? &*memory : nullptr, extractor ? &*extractor : nullptr};
    }
};

std::unique_ptr<LoadedModels> load_models(const PipelineConfig& cfg) {
    if (cfg.grm_path.empty()) throw ConfigError("no GRM checkpoint given (--grm or grm_path)");
    auto m = std::unique_ptr<LoadedModels>(new LoadedModels{
        models::grm_from_checkpoint(models::load_checkpoint(cfg.grm_path)), nullptr, std::nullopt, std::nullopt,
        cfg.schedule()});
    if (cfg.denoiser == "oracle") {
        m->denoiser = std::make_unique<models::GaussianOracleDenoiser>(
            models::GaussianOracleStats{cfg.oracle_mean, cfg.oracle_variance}, m->schedule);
    } else {
        if (cfg.dit_path.empty()) throw ConfigError("no Patch-DiT checkpoint given (--dit or dit_path)");
        auto params = models::patch_dit_from_checkpoint(models::load_checkpoint(cfg.dit_path));
        if (params.config.patch_size != cfg.patch_size) {
            throw ConfigError("Patch-DiT was trained for patch size " + std::to_string(params.config.patch_size));
        }
        m->denoiser = std::make_unique<models::PatchDiT>(std::move(params));
    }
    if (!cfg.rtm_path.empty()) {
        m->memory = load_memory(cfg.rtm_path);
        m->extractor.emplace(make_extractor(cfg, m->memory->value_shape.channels));
        if (m->memory->key_dim != m->extractor->dim()) {
            throw ConfigError("texture memory key dimension does not match extractor_dim");
        }
    }
    return m;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError(IoErrorKind::open_failed, path.string());
    out << text;
    if (!out) throw IoError(IoErrorKind::open_failed, "write failed: " + path.string());
}

float abs_range(const LatentGrid& g) {
    float r = 1e-6f;
    for (float v : g.data()) r = std::max(r, std::abs(v));
    return r;
}

// ---------------------------------------------------------------------------

struct GenDataArgs {
    SharedFlags shared;
    std::string out = "data";
    std::size_t count = 4;
    std::string layout = "blocks";
    std::size_t height = 96;
    std::size_t width = 96;
    double smooth_fraction = 0.6;
    DegradeSpec degrade;
};

int run_gen_data(const GenDataArgs& a) {
    const PipelineConfig cfg = a.shared.resolve();
    if (a.layout != "split" && a.layout != "blocks") throw ConfigError("layout must be 'split' or 'blocks'");
    fs::create_directories(a.out);
    for (std::size_t i = 0; i < a.count; ++i) {
        SceneSpec spec;
        spec.height = a.height;
        spec.width = a.width;
        spec.layout = a.layout == "split" ? SceneLayout::split : SceneLayout::blocks;
        spec.smooth_fraction = a.smooth_fraction;
        spec.seed = cfg.seed * 1000 + i;
        DegradeSpec deg = a.degrade;
        deg.factor = cfg.scale;
        deg.seed = cfg.seed * 1000 + 500 + i;
        const SyntheticScene s = make_scene(spec, deg);
        char name[32];
        std::snprintf(name, sizeof name, "scene_%03zu", i);
        const fs::path base = fs::path(a.out) / name;
        save_grid(s.hr, base.string() + "_hr.psg");
        save_grid(s.lr, base.string() + "_lr.psg");
        save_grid(s.labels, base.string() + "_labels.psg");
        const float r = abs_range(s.hr);
        export_preview(s.hr, base.string() + "_hr.pgm", -r, r);
        export_preview(s.lr, base.string() + "_lr.pgm", -r, r);
        std::ostringstream meta;
        meta << "layout = " << a.layout << "\nsmooth_fraction = " << spec.smooth_fraction << "\nscene_seed = " << spec.seed
             << "\nblur_sigma = " << deg.blur_sigma << "\nnoise_sigma = " << deg.noise_sigma
             << "\nfactor = " << deg.factor << "\ndegrade_seed = " << deg.seed << '\n';
        write_text(base.string() + ".txt", meta.str());
    }
    std::cout << "wrote " << a.count << " scenes to " << a.out << '\n';
    return 0;
}

struct TrainArgs {
    SharedFlags shared;
    std::string data = "data";
    std::string out;
    int steps = 2000;
    double learning_rate = 0.0;
    int batch = 0;
    std::size_t crop = 24;
    std::size_t features = 12;
    std::size_t layers = 3;
    std::size_t width = 64;
    std::size_t depth = 2;
    std::size_t heads = 4;
    std::size_t token_size = 4;
    std::uint64_t init_seed = 5;
};

void print_trace(const models::TrainResult& r) {
    const auto& t = r.loss_trace;
    const std::size_t window = std::max<std::size_t>(1, std::min<std::size_t>(50, t.size() / 4));
    double first = 0.0, last = 0.0;
    for (std::size_t i = 0; i < window; ++i) {
        first += t[i] / window;
        last += t[t.size() - 1 - i] / window;
    }
    std::cout << "loss_first = " << first << "\nloss_last = " << last << '\n';
}

int run_train_grm(const TrainArgs& a) {
    const PipelineConfig cfg = a.shared.resolve();
    std::vector<models::GrmExample> pairs;
    for (const DataPair& p : load_pairs(a.data, true)) {
        pairs.push_back({encode(upsample_nearest(p.lr, cfg.scale), cfg.downsample), encode(p.hr, cfg.downsample)});
        require_same_shape(pairs.back().input, pairs.back().target, "GRM training pair");
    }
    models::GrmConfig gc;
    gc.channels = pairs.front().input.channels();
    gc.features = a.features;
    gc.layers = a.layers;
    models::GrmParams grm = models::init_grm(gc, a.init_seed);
    models::GrmTrainOptions opt;
    opt.train.steps = a.steps;
    opt.train.learning_rate = a.learning_rate > 0.0 ? a.learning_rate : 5e-3;
    opt.train.seed = cfg.seed;
    if (a.batch > 0) opt.batch = a.batch;
    print_trace(models::train_grm(grm, make_grm_sampler(std::move(pairs), a.crop), opt));
    models::save_checkpoint(models::to_checkpoint(grm), a.out);
    std::cout << "saved " << a.out << '\n';
    return 0;
}

int run_train_dit(const TrainArgs& a) {
    const PipelineConfig cfg = a.shared.resolve();
    std::vector<LatentGrid> latents;
    for (const DataPair& p : load_pairs(a.data, false)) latents.push_back(encode(p.hr, cfg.downsample));
    std::optional<TextureMemory> memory;
    std::optional<RandomProjectionExtractor> extractor;
    if (!cfg.rtm_path.empty()) {
        memory = load_memory(cfg.rtm_path);
        extractor.emplace(make_extractor(cfg, memory->value_shape.channels));
    }
    models::PatchDiTConfig dc;
    dc.channels = latents.front().channels();
    dc.patch_size = cfg.patch_size;
    dc.token_size = a.token_size;
    dc.width = a.width;
    dc.depth = a.depth;
    dc.heads = a.heads;
    models::PatchDiTParams params = models::init_patch_dit(dc, a.init_seed);
    models::DiTTrainOptions opt;
    opt.train.steps = a.steps;
    opt.train.learning_rate = a.learning_rate > 0.0 ? a.learning_rate : 2e-3;
    opt.train.seed = cfg.seed;
    opt.max_step = cfg.schedule_steps;
    if (a.batch > 0) opt.batch = a.batch;
    const auto sampler = make_dit_sampler(std::move(latents), cfg.patch_size, memory ? &*memory : nullptr,
                                          extractor ? &*extractor : nullptr, cfg.topk);
    print_trace(models::train_patch_dit(params, cfg.schedule(), sampler, opt));
    models::save_checkpoint(models::to_checkpoint(params), a.out);
    std::cout << "saved " << a.out << '\n';
    return 0;
}

struct RtmArgs {
    SharedFlags shared;
    std::string src = "data";
    std::string out;
    std::size_t size = 200;
    std::size_t stride = 0;
    std::string mem;
    std::string patch;
};

int run_rtm_build(const RtmArgs& a) {
    const PipelineConfig cfg = a.shared.resolve();
    const std::size_t stride = a.stride > 0 ? a.stride : std::max<std::size_t>(1, cfg.patch_size / 2);
    std::vector<LatentGrid> patches;
    for (const DataPair& p : load_pairs(a.src, false)) {
        for (LatentGrid& t : tile_patches(encode(p.hr, cfg.downsample), cfg.patch_size, stride)) {
            patches.push_back(std::move(t));
        }
    }
    const RandomProjectionExtractor ex = make_extractor(cfg, patches.front().channels());
    const TextureMemory mem = build_memory(patches, ex, a.size);
    save_memory(mem, a.out);
    std::cout << "source_patches = " << patches.size() << "\nentries = " << mem.size() << "\nsaved " << a.out << '\n';
    return 0;
}

int run_rtm_query(const RtmArgs& a) {
    const PipelineConfig cfg = a.shared.resolve();
    const TextureMemory mem = load_memory(a.mem);
    const RandomProjectionExtractor ex = make_extractor(cfg, mem.value_shape.channels);
    const RetrievalResult r = retrieve_topk(mem, load_grid(a.patch), ex, cfg.topk);
    for (std::size_t k = 0; k < r.size(); ++k) std::cout << r.indices[k] << ' ' << r.similarities[k] << '\n';
    return 0;
}

struct SrArgs {
    SharedFlags shared;
    std::string input;
    std::string output;
    std::string preview;
    std::string report;
    bool unified = false;
};

int run_sr(const SrArgs& a) {
    PipelineConfig cfg = a.shared.resolve();
    if (!a.input.empty()) cfg.input = a.input;
    if (!a.output.empty()) cfg.output = a.output;
    if (cfg.input.empty() || cfg.output.empty()) throw ConfigError("sr needs --input and --output");
    const auto m = load_models(cfg);
    const LatentGrid lr = load_grid(cfg.input);
    const SrResult r = superresolve(cfg, m->view(), lr, a.unified ? SamplingMode::unified : SamplingMode::pgs);
    save_grid(r.sr, cfg.output);
    if (!a.preview.empty()) {
        const float range = abs_range(r.sr);
        export_preview(r.sr, a.preview, -range, range);
    }
    std::string text = to_text(r.report);
    text += "degenerate_queries = " + std::to_string(r.degenerate_queries) + '\n';
    if (!a.report.empty()) write_text(a.report, text);
    std::cout << text;
    return 0;
}

struct BenchArgs {
    SharedFlags shared;
    std::string scene;
    std::uint64_t scene_seed = 77;
    std::size_t height = 96;
    std::size_t width = 96;
    int repeats = 2;
    std::vector<std::string> sweep;
    std::string report;
};

std::vector<GroupSetting> parse_sweep(const std::vector<std::string>& items) {
    std::vector<GroupSetting> out;
    for (const std::string& item : items) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw ConfigError("sweep entries are tau:steps, got '" + item + "'");
        try {
            out.push_back({std::stoi(item.substr(0, colon)), std::stoi(item.substr(colon + 1))});
        } catch (const std::exception&) {
            throw ConfigError("sweep entries are tau:steps, got '" + item + "'");
        }
    }
    return out;
}

int run_bench(const BenchArgs& a) {
    const PipelineConfig cfg = a.shared.resolve();
    const auto m = load_models(cfg);
    SyntheticScene scene;
    if (!a.scene.empty()) {
        scene.hr = load_grid(a.scene + "_hr.psg");
        scene.lr = load_grid(a.scene + "_lr.psg");
    } else {
        SceneSpec spec;
        spec.height = a.height;
        spec.width = a.width;
        spec.seed = a.scene_seed;
        DegradeSpec deg;
        deg.factor = cfg.scale;
        deg.seed = a.scene_seed + 1;
        scene = make_scene(spec, deg);
    }
    std::string text = to_text(benchmark(cfg, m->view(), scene, a.repeats));
    if (!a.sweep.empty()) {
        text += "[sweep]\n" + to_text(sweep(cfg, m->view(), scene, parse_sweep(a.sweep), a.repeats));
    }
    if (!a.report.empty()) write_text(a.report, text);
    std::cout << text;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PatchScaler: patch-adaptive diffusion super-resolution"};
    app.require_subcommand(1);

    GenDataArgs gen;
    CLI::App* gen_cmd = app.add_subcommand("gen-data", "write synthetic scenes (hr, lr, labels)");
    gen.shared.attach(gen_cmd);
    gen_cmd->add_option("--out", gen.out, "output directory");
    gen_cmd->add_option("--count", gen.count, "number of scenes");
    gen_cmd->add_option("--layout", gen.layout, "split or blocks");
    gen_cmd->add_option("--height", gen.height);
    gen_cmd->add_option("--width", gen.width);
    gen_cmd->add_option("--smooth-fraction", gen.smooth_fraction);
    gen_cmd->add_option("--blur", gen.degrade.blur_sigma);
    gen_cmd->add_option("--noise", gen.degrade.noise_sigma);

    TrainArgs grm;
    CLI::App* grm_cmd = app.add_subcommand("train-grm", "train the global restoration module");
    grm.shared.attach(grm_cmd);
    grm_cmd->add_option("--data", grm.data, "directory of *_hr.psg / *_lr.psg pairs");
    grm_cmd->add_option("--out", grm.out)->required();
    grm_cmd->add_option("--train-steps", grm.steps);
    grm_cmd->add_option("--lr", grm.learning_rate);
    grm_cmd->add_option("--batch", grm.batch);
    grm_cmd->add_option("--crop", grm.crop);
    grm_cmd->add_option("--features", grm.features);
    grm_cmd->add_option("--layers", grm.layers);
    grm_cmd->add_option("--init-seed", grm.init_seed);

    TrainArgs dit;
    CLI::App* dit_cmd = app.add_subcommand("train-dit", "train the Patch-DiT denoiser");
    dit.shared.attach(dit_cmd);
    dit.steps = 1000;
    dit.init_seed = 11;
    dit_cmd->add_option("--data", dit.data, "directory of *_hr.psg files");
    dit_cmd->add_option("--out", dit.out)->required();
    dit_cmd->add_option("--train-steps", dit.steps);
    dit_cmd->add_option("--lr", dit.learning_rate);
    dit_cmd->add_option("--batch", dit.batch);
    dit_cmd->add_option("--width", dit.width);
    dit_cmd->add_option("--depth", dit.depth);
    dit_cmd->add_option("--heads", dit.heads);
    dit_cmd->add_option("--token-size", dit.token_size);
    dit_cmd->add_option("--init-seed", dit.init_seed);

    RtmArgs rtm;
    CLI::App* rtm_cmd = app.add_subcommand("rtm", "reference texture memory");
    rtm_cmd->require_subcommand(1);
    CLI::App* build_cmd = rtm_cmd->add_subcommand("build", "build a memory from HR scenes");
    rtm.shared.attach(build_cmd);
    build_cmd->add_option("--src", rtm.src, "directory of *_hr.psg files");
    build_cmd->add_option("--out", rtm.out)->required();
    build_cmd->add_option("--size", rtm.size, "entries kept by farthest point sampling");
    build_cmd->add_option("--stride", rtm.stride, "source tiling stride (default V/2)");
    RtmArgs query;
    CLI::App* query_cmd = rtm_cmd->add_subcommand("query", "print the top-K entries for a patch");
    query.shared.attach(query_cmd);
    query_cmd->add_option("--mem", query.mem)->required();
    query_cmd->add_option("--patch", query.patch)->required();

    SrArgs sr;
    CLI::App* sr_cmd = app.add_subcommand("sr", "super-resolve one LR grid");
    sr.shared.attach(sr_cmd);
    sr_cmd->add_option("--input", sr.input);
    sr_cmd->add_option("--output", sr.output);
    sr_cmd->add_option("--preview", sr.preview, "PGM/PPM preview path");
    sr_cmd->add_option("--report", sr.report, "write the sampling report here");
    sr_cmd->add_flag("--unified", sr.unified, "sample every patch from T with the unified budget");

    BenchArgs bench;
    CLI::App* bench_cmd = app.add_subcommand("bench", "PGS vs unified on a labelled scene");
    bench.shared.attach(bench_cmd);
    bench_cmd->add_option("--scene", bench.scene, "prefix of <scene>_hr.psg / <scene>_lr.psg");
    bench_cmd->add_option("--scene-seed", bench.scene_seed, "seed of the generated split scene");
    bench_cmd->add_option("--height", bench.height);
    bench_cmd->add_option("--width", bench.width);
    bench_cmd->add_option("--repeats", bench.repeats);
    bench_cmd->add_option("--sweep", bench.sweep, "tau:steps entries run on every patch")->delimiter(',');
    bench_cmd->add_option("--report", bench.report);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (gen_cmd->parsed()) return run_gen_data(gen);
        if (grm_cmd->parsed()) return run_train_grm(grm);
        if (dit_cmd->parsed()) return run_train_dit(dit);
        if (build_cmd->parsed()) return run_rtm_build(rtm);
        if (query_cmd->parsed()) return run_rtm_query(query);
        if (sr_cmd->parsed()) return run_sr(sr);
        if (bench_cmd->parsed()) return run_bench(bench);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << '\n';
        return kExitIo;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "io error: " << e.what() << '\n';
        return kExitIo;
    }
    return 1;
}
