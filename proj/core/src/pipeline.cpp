// SPDX-License-Identifier: Apache-2.0
#include "patchscaler/pipeline.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <random>
#include <sstream>

#include "patchscaler/colornorm.hpp"
#include "patchscaler/error.hpp"
#include "patchscaler/tiling.hpp"

namespace patchscaler {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
    T out{};
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc{} || ptr != value.data() + value.size()) {
        throw ConfigError("invalid value '" + std::string(value) + "' for " + std::string(key));
    }
    return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError("invalid boolean '" + std::string(value) + "' for " + std::string(key));
}

using Setter = std::function<void(PipelineConfig&, std::string_view, std::string_view)>;

template <typename T>
Setter number(T PipelineConfig::*field) {
    return [field](PipelineConfig& c, std::string_view k, std::string_view v) { c.*field = parse_number<T>(k, v); };
}

Setter text(std::string PipelineConfig::*field) {
    return [field](PipelineConfig& c, std::string_view, std::string_view v) { c.*field = std::string(v); };
}

Setter flag(bool PipelineConfig::*field) {
    return [field](PipelineConfig& c, std::string_view k, std::string_view v) { c.*field = parse_bool(k, v); };
}

Setter group_tau(GroupLabel g) {
    return [g](PipelineConfig& c, std::string_view k, std::string_view v) { c.groups[g].tau = parse_number<int>(k, v); };
}

Setter group_steps(GroupLabel g) {
    return [g](PipelineConfig& c, std::string_view k, std::string_view v) {
        c.groups[g].steps = parse_number<int>(k, v);
    };
}

const std::map<std::string, Setter, std::less<>>& setters() {
    static const std::map<std::string, Setter, std::less<>> table{
        {"downsample", number(&PipelineConfig::downsample)},
        {"scale", number(&PipelineConfig::scale)},
        {"patch_size", number(&PipelineConfig::patch_size)},
        {"overlap", number(&PipelineConfig::overlap)},
        {"gamma1", number(&PipelineConfig::gamma1)},
        {"gamma2", number(&PipelineConfig::gamma2)},
        {"tau_simple", group_tau(GroupLabel::simple)},
        {"tau_medium", group_tau(GroupLabel::medium)},
        {"tau_hard", group_tau(GroupLabel::hard)},
        {"steps_simple", group_steps(GroupLabel::simple)},
        {"steps_medium", group_steps(GroupLabel::medium)},
        {"steps_hard", group_steps(GroupLabel::hard)},
        {"unified_steps",
         [](PipelineConfig& c, std::string_view k, std::string_view v) { c.groups.unified_steps = parse_number<int>(k, v); }},
        {"topk", number(&PipelineConfig::topk)},
        {"rtm_path", text(&PipelineConfig::rtm_path)},
        {"grm_path", text(&PipelineConfig::grm_path)},
        {"dit_path", text(&PipelineConfig::dit_path)},
        {"denoiser", text(&PipelineConfig::denoiser)},
        {"oracle_mean", number(&PipelineConfig::oracle_mean)},
        {"oracle_variance", number(&PipelineConfig::oracle_variance)},
        {"schedule_steps", number(&PipelineConfig::schedule_steps)},
        {"beta_start", number(&PipelineConfig::beta_start)},
        {"beta_end", number(&PipelineConfig::beta_end)},
        {"seed", number(&PipelineConfig::seed)},
        {"extractor_seed", number(&PipelineConfig::extractor_seed)},
        {"extractor_dim", number(&PipelineConfig::extractor_dim)},
        {"color_levels", number(&PipelineConfig::color_levels)},
        {"color_normalize", flag(&PipelineConfig::color_normalize)},
        {"parallel_groups", flag(&PipelineConfig::parallel_groups)},
        {"input", text(&PipelineConfig::input)},
        {"output", text(&PipelineConfig::output)},
    };
    return table;
}

void require_factor(const LatentGrid& image, std::size_t factor, const char* what) {
    if (factor == 0) throw ConfigError(std::string(what) + " factor must be positive");
    if (image.height() % factor != 0 || image.width() % factor != 0) {
        throw ShapeError(std::string(what) + " factor " + std::to_string(factor) + " does not divide " +
                         std::to_string(image.height()) + "x" + std::to_string(image.width()));
    }
}

struct Wave {
    double fy, fx, phase, amplitude;
};

double wave_sum(const std::vector<Wave>& waves, double y, double x) {
    double v = 0.0;
    for (const Wave& w : waves) v += w.amplitude * std::sin(2.0 * std::numbers::pi * (w.fy * y + w.fx * x) + w.phase);
    return v;
}

std::vector<Wave> random_waves(std::mt19937_64& rng, int count, double fmin, double fmax, double amplitude) {
    std::uniform_real_distribution<double> freq(fmin, fmax);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    std::vector<Wave> out;
    for (int i = 0; i < count; ++i) {
        const double f = freq(rng);
        const double a = angle(rng);
        out.push_back({f * std::sin(a), f * std::cos(a), angle(rng), amplitude});
    }
    return out;
}

}  // namespace

NoiseSchedule PipelineConfig::schedule() const { return build_linear_schedule(schedule_steps, beta_start, beta_end); }

void PipelineConfig::validate() const {
    if (downsample != 1 && downsample != 2 && downsample != 4) throw ConfigError("downsample must be 1, 2 or 4");
    if (scale == 0) throw ConfigError("scale must be positive");
    if (patch_size == 0) throw ConfigError("patch_size must be positive");
    if (overlap >= patch_size) throw ConfigError("overlap must be smaller than patch_size");
    thresholds().validate();
    if (schedule_steps < 1) throw ConfigError("schedule_steps must be positive");
    groups.validate(schedule_steps);
    if (topk == 0) throw ConfigError("topk must be positive");
    if (denoiser != "patchdit" && denoiser != "oracle") throw ConfigError("denoiser must be 'patchdit' or 'oracle'");
    if (!(oracle_variance > 0.0)) throw ConfigError("oracle_variance must be positive");
    if (extractor_dim == 0) throw ConfigError("extractor_dim must be positive");
    if (color_levels < 1) throw ConfigError("color_levels must be positive");
}

void set_config_value(PipelineConfig& cfg, std::string_view key, std::string_view value) {
    const auto& table = setters();
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
    it->second(cfg, key, value);
}

PipelineConfig parse_config(std::string_view text, PipelineConfig base) {
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        const std::string_view line = trim(text.substr(0, nl));
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        }
        set_config_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return base;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(IoErrorKind::open_failed, "cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string to_text(const PipelineConfig& c) {
    std::ostringstream out;
    out << "downsample = " << c.downsample << "\nscale = " << c.scale << "\npatch_size = " << c.patch_size
        << "\noverlap = " << c.overlap << "\ngamma1 = " << c.gamma1 << "\ngamma2 = " << c.gamma2;
    for (GroupLabel g : kAllGroups) out << "\ntau_" << group_name(g) << " = " << c.groups[g].tau;
    for (GroupLabel g : kAllGroups) out << "\nsteps_" << group_name(g) << " = " << c.groups[g].steps;
    out << "\nunified_steps = " << c.groups.unified_steps << "\ntopk = " << c.topk << "\nrtm_path = " << c.rtm_path
        << "\ngrm_path = " << c.grm_path << "\ndit_path = " << c.dit_path << "\ndenoiser = " << c.denoiser
        << "\noracle_mean = " << c.oracle_mean << "\noracle_variance = " << c.oracle_variance
        << "\nschedule_steps = " << c.schedule_steps << "\nbeta_start = " << c.beta_start
        << "\nbeta_end = " << c.beta_end << "\nseed = " << c.seed << "\nextractor_seed = " << c.extractor_seed
        << "\nextractor_dim = " << c.extractor_dim << "\ncolor_levels = " << c.color_levels
        << "\ncolor_normalize = " << (c.color_normalize ? "true" : "false")
        << "\nparallel_groups = " << (c.parallel_groups ? "true" : "false") << "\ninput = " << c.input
        << "\noutput = " << c.output << '\n';
    return out.str();
}

LatentGrid render_scene(const SceneSpec& spec, LatentGrid* labels) {
    if (spec.channels == 0 || spec.height == 0 || spec.width == 0) throw ConfigError("scene dimensions must be positive");
    if (!(spec.smooth_fraction >= 0.0 && spec.smooth_fraction <= 1.0)) {
        throw ConfigError("smooth_fraction must lie in [0, 1]");
    }
    if (spec.layout == SceneLayout::blocks && spec.block == 0) throw ConfigError("scene block size must be positive");
    std::mt19937_64 rng(spec.seed);

    LatentGrid mask(1, spec.height, spec.width);
    if (spec.layout == SceneLayout::split) {
        const auto boundary = static_cast<std::size_t>(std::lround(spec.smooth_fraction * spec.width));
        for (std::size_t y = 0; y < spec.height; ++y) {
            for (std::size_t x = boundary; x < spec.width; ++x) mask.at(0, y, x) = 1.0f;
        }
    } else {
        std::bernoulli_distribution smooth(spec.smooth_fraction);
        for (std::size_t by = 0; by < spec.height; by += spec.block) {
            for (std::size_t bx = 0; bx < spec.width; bx += spec.block) {
                if (smooth(rng)) continue;
                for (std::size_t y = by; y < std::min(by + spec.block, spec.height); ++y) {
                    for (std::size_t x = bx; x < std::min(bx + spec.block, spec.width); ++x) mask.at(0, y, x) = 1.0f;
                }
            }
        }
    }

    LatentGrid out(spec.channels, spec.height, spec.width);
    // Four waves of amplitude a have variance 2 a^2.
    const double texture_amp = spec.texture_std / std::sqrt(2.0);
    for (std::size_t c = 0; c < spec.channels; ++c) {
        const std::vector<Wave> smooth = random_waves(rng, 3, 0.004, 0.025, spec.smooth_amplitude / 2.0);
        const std::vector<Wave> texture = random_waves(rng, 4, 0.15, 0.45, texture_amp);
        for (std::size_t y = 0; y < spec.height; ++y) {
            for (std::size_t x = 0; x < spec.width; ++x) {
                double v = wave_sum(smooth, static_cast<double>(y), static_cast<double>(x));
                if (mask.at(0, y, x) > 0.5f) v += wave_sum(texture, static_cast<double>(y), static_cast<double>(x));
                out.at(c, y, x) = static_cast<float>(v);
            }
        }
    }
    if (labels) *labels = std::move(mask);
    return out;
}

SyntheticScene make_scene(const SceneSpec& spec, const DegradeSpec& degrade) {
    SyntheticScene s;
    s.spec = spec;
    s.degrade = degrade;
    s.hr = render_scene(spec, &s.labels);
    s.lr = synth_degrade(s.hr, degrade.blur_sigma, degrade.noise_sigma, degrade.factor, degrade.seed);
    return s;
}

LatentGrid gaussian_blur(const LatentGrid& image, double sigma) {
    if (!(sigma >= 0.0)) throw ConfigError("blur sigma must be non-negative");
    if (sigma == 0.0) return image;
    const auto radius = static_cast<long>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (long i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
        kernel[static_cast<std::size_t>(i + radius)] = v;
        sum += v;
    }
    for (double& k : kernel) k /= sum;

    const auto h = static_cast<long>(image.height());
    const auto w = static_cast<long>(image.width());
    auto clampi = [](long v, long hi) { return std::clamp(v, 0L, hi - 1); };
    std::vector<double> tmp(image.size());
    LatentGrid out(image.shape());
    for (std::size_t c = 0; c < image.channels(); ++c) {
        const std::size_t base = c * image.shape().plane();
        for (long y = 0; y < h; ++y) {
            for (long x = 0; x < w; ++x) {
                double acc = 0.0;
                for (long i = -radius; i <= radius; ++i) {
                    acc += kernel[static_cast<std::size_t>(i + radius)] *
                           image.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(clampi(x + i, w)));
                }
                tmp[base + static_cast<std::size_t>(y * w + x)] = acc;
            }
        }
        for (long y = 0; y < h; ++y) {
            for (long x = 0; x < w; ++x) {
                double acc = 0.0;
                for (long i = -radius; i <= radius; ++i) {
                    acc += kernel[static_cast<std::size_t>(i + radius)] *
                           tmp[base + static_cast<std::size_t>(clampi(y + i, h) * w + x)];
                }
                out.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = static_cast<float>(acc);
            }
        }
    }
    return out;
}

LatentGrid synth_degrade(const LatentGrid& hr, double blur_sigma, double noise_sigma, std::size_t factor,
                         std::uint64_t seed) {
    require_factor(hr, factor, "degradation");
    if (!(noise_sigma >= 0.0)) throw ConfigError("noise sigma must be non-negative");
    const LatentGrid blurred = gaussian_blur(hr, blur_sigma);
    LatentGrid out(hr.channels(), hr.height() / factor, hr.width() / factor);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t c = 0; c < out.channels(); ++c) {
        for (std::size_t y = 0; y < out.height(); ++y) {
            for (std::size_t x = 0; x < out.width(); ++x) {
                const double n = noise_sigma > 0.0 ? noise_sigma * noise(rng) : 0.0;
                out.at(c, y, x) = static_cast<float>(blurred.at(c, y * factor, x * factor) + n);
            }
        }
    }
    return out;
}

LatentGrid upsample_nearest(const LatentGrid& image, std::size_t factor) {
    if (factor == 0) throw ConfigError("upsampling factor must be positive");
    LatentGrid out(image.channels(), image.height() * factor, image.width() * factor);
    for (std::size_t c = 0; c < out.channels(); ++c) {
        for (std::size_t y = 0; y < out.height(); ++y) {
            for (std::size_t x = 0; x < out.width(); ++x) out.at(c, y, x) = image.at(c, y / factor, x / factor);
        }
    }
    return out;
}

LatentGrid encode(const LatentGrid& image, std::size_t d) {
    require_factor(image, d, "encoder");
    if (d == 1) return image;
    LatentGrid out(image.channels(), image.height() / d, image.width() / d);
    const double inv = 1.0 / static_cast<double>(d * d);
    for (std::size_t c = 0; c < out.channels(); ++c) {
        for (std::size_t y = 0; y < out.height(); ++y) {
            for (std::size_t x = 0; x < out.width(); ++x) {
                double acc = 0.0;
                for (std::size_t dy = 0; dy < d; ++dy) {
                    for (std::size_t dx = 0; dx < d; ++dx) acc += image.at(c, y * d + dy, x * d + dx);
                }
                out.at(c, y, x) = static_cast<float>(acc * inv);
            }
        }
    }
    return out;
}

LatentGrid decode(const LatentGrid& latent, std::size_t d) {
    if (d == 1) return latent;
    return upsample_nearest(latent, d);
}

std::vector<LatentGrid> tile_patches(const LatentGrid& image, std::size_t patch_size, std::size_t stride) {
    if (stride == 0 || stride > patch_size) throw ConfigError("tile stride must lie in [1, patch_size]");
    const PatchGrid grid = make_patch_grid(image.shape(), patch_size, patch_size - stride);
    std::vector<LatentGrid> out;
    out.reserve(grid.count());
    for (const PatchAnchor& a : grid.anchors) out.push_back(extract_patch(image, a, patch_size));
    return out;
}

RandomProjectionExtractor make_extractor(const PipelineConfig& cfg, std::size_t channels) {
    return RandomProjectionExtractor({channels, cfg.patch_size, cfg.patch_size}, cfg.extractor_dim, cfg.extractor_seed);
}

SrResult superresolve(const PipelineConfig& cfg, const SrModels& models, const LatentGrid& lr, SamplingMode mode) {
    with_stage("config", [&] { cfg.validate(); });
    if (!models.grm) throw ConfigError("grm: no restoration model loaded");
    if (!models.denoiser) throw ConfigError("pgs: no denoiser loaded");
    if (models.memory && !models.extractor) throw ConfigError("retrieve: texture memory given without an extractor");

    const NoiseSchedule schedule = cfg.schedule();
    const LatentGrid lr_up = upsample_nearest(lr, cfg.scale);
    SrResult r;
    const LatentGrid latent = with_stage("encode", [&] { return encode(lr_up, cfg.downsample); });
    with_stage("grm", [&] {
        models::GrmOutput out = models::grm_restore(*models.grm, latent);
        r.coarse = std::move(out.features);
        r.confidence = std::move(out.confidence);
    });
    const Decomposition dec = with_stage("decompose", [&] { return decompose(r.coarse, cfg.patch_size, cfg.overlap); });
    r.qmap = with_stage("qmap", [&] { return build_qmap(r.confidence, dec.grid, cfg.thresholds()); });

    std::vector<RetrievalResult> retrieved;
    PromptRefs prompts;
    if (models.memory) {
        with_stage("retrieve", [&] {
            retrieved.resize(dec.patches.size());
            prompts.assign(dec.patches.size(), nullptr);
            for (std::size_t i = 0; i < dec.patches.size(); ++i) {
                try {
                    retrieved[i] = retrieve_topk(*models.memory, dec.patches[i], *models.extractor, cfg.topk);
                    prompts[i] = &retrieved[i];
                } catch (const DegenerateQueryError&) {
                    ++r.degenerate_queries;
                }
            }
        });
    }

    PgsResult sampled = with_stage("pgs", [&] {
        if (mode == SamplingMode::unified) {
            return compare_unified(*models.denoiser, schedule, dec.patches, cfg.groups.unified_steps, prompts, cfg.seed);
        }
        return run_pgs(*models.denoiser, schedule, dec.patches, r.qmap, cfg.groups, prompts, cfg.seed,
                       cfg.parallel_groups);
    });
    r.report = sampled.report;

    const LatentGrid merged = with_stage("recompose", [&] {
        return recompose(sampled.patches, dec.grid, BlendWeights(dec.grid, BlendMode::uniform));
    });
    LatentGrid image = with_stage("decode", [&] { return decode(merged, cfg.downsample); });
    if (cfg.color_normalize) {
        image = with_stage("colornorm", [&] {
            const std::size_t block = std::size_t{1} << cfg.color_levels;
            const LatentGrid sr_pad = pad_to_multiple(image, block);
            const LatentGrid ref_pad = pad_to_multiple(lr_up, block);
            return crop(wavelet_color_normalize(sr_pad, ref_pad, cfg.color_levels), image.height(), image.width());
        });
    }
    if (!image.all_finite()) throw NumericError("output contains non-finite values");
    r.sr = std::move(image);
    return r;
}

BenchmarkResult benchmark(const PipelineConfig& cfg, const SrModels& models, const SyntheticScene& scene, int repeats) {
    if (repeats < 1) throw ConfigError("benchmark needs at least one repeat");
    BenchmarkResult b;
    b.repeats = repeats;
    for (int r = 0; r < repeats; ++r) {
        PipelineConfig run = cfg;
        run.seed = cfg.seed + static_cast<std::uint64_t>(r);
        const SrResult pgs = superresolve(run, models, scene.lr, SamplingMode::pgs);
        const SrResult uni = superresolve(run, models, scene.lr, SamplingMode::unified);
        require_same_shape(pgs.sr, scene.hr, "ground truth");
        b.mse_pgs += mean_squared_error(pgs.sr, scene.hr) / repeats;
        b.mse_unified += mean_squared_error(uni.sr, scene.hr) / repeats;
        b.mse_coarse += mean_squared_error(decode(pgs.coarse, cfg.downsample), scene.hr) / repeats;
        if (r == 0) {
            b.pgs = pgs.report;
            b.unified = uni.report;
        } else {
            b.pgs.wall_ms += pgs.report.wall_ms;
            b.unified.wall_ms += uni.report.wall_ms;
        }
    }
    b.pgs.wall_ms /= repeats;
    b.unified.wall_ms /= repeats;
    return b;
}

std::string to_text(const BenchmarkResult& b) {
    std::ostringstream out;
    out << "[pgs]\n" << to_text(b.pgs) << "mse = " << b.mse_pgs << "\n\n";
    out << "[unified]\n" << to_text(b.unified) << "mse = " << b.mse_unified << "\n\n";
    out << "[summary]\nrepeats = " << b.repeats << "\nmse_coarse = " << b.mse_coarse
        << "\nnfe_ratio = " << (b.unified.nfe_total == 0 ? 0.0 : static_cast<double>(b.pgs.nfe_total) / b.unified.nfe_total)
        << "\nmse_ratio = " << (b.mse_unified == 0.0 ? 0.0 : b.mse_pgs / b.mse_unified) << '\n';
    return out.str();
}

std::vector<SweepPoint> sweep(const PipelineConfig& cfg, const SrModels& models, const SyntheticScene& scene,
                              const std::vector<GroupSetting>& settings, int repeats) {
    if (repeats < 1) throw ConfigError("sweep needs at least one repeat");
    std::vector<SweepPoint> out;
    for (const GroupSetting& s : settings) {
        PipelineConfig run = cfg;
        run.groups.groups = {s, s, s};
        SweepPoint p{s, 0, 0.0};
        for (int r = 0; r < repeats; ++r) {
            run.seed = cfg.seed + static_cast<std::uint64_t>(r);
            const SrResult res = superresolve(run, models, scene.lr, SamplingMode::pgs);
            p.nfe = res.report.nfe_total;
            p.mse += mean_squared_error(res.sr, scene.hr) / repeats;
        }
        out.push_back(p);
    }
    return out;
}

std::string to_text(const std::vector<SweepPoint>& points) {
    std::ostringstream out;
    out << "# tau steps nfe mse\n";
    for (const SweepPoint& p : points) out << p.setting.tau << ' ' << p.setting.steps << ' ' << p.nfe << ' ' << p.mse << '\n';
    return out.str();
}

models::GrmExample grm_pair(const SyntheticScene& scene, std::size_t downsample) {
    return {encode(upsample_nearest(scene.lr, scene.degrade.factor), downsample), encode(scene.hr, downsample)};
}

models::GrmSampler make_grm_sampler(std::vector<models::GrmExample> pairs, std::size_t crop_size) {
    if (pairs.empty()) throw ConfigError("GRM sampler needs at least one training pair");
    for (const models::GrmExample& p : pairs) {
        require_same_shape(p.input, p.target, "GRM training pair");
        if (p.input.height() < crop_size || p.input.width() < crop_size) throw ShapeError("GRM crop exceeds image");
    }
    auto shared = std::make_shared<const std::vector<models::GrmExample>>(std::move(pairs));
    return [shared, crop_size](std::mt19937_64& rng) {
        const auto& all = *shared;
        const auto& pair = all[std::uniform_int_distribution<std::size_t>(0, all.size() - 1)(rng)];
        const PatchAnchor a{std::uniform_int_distribution<std::size_t>(0, pair.input.height() - crop_size)(rng),
                            std::uniform_int_distribution<std::size_t>(0, pair.input.width() - crop_size)(rng)};
        return models::GrmExample{extract_patch(pair.input, a, crop_size), extract_patch(pair.target, a, crop_size)};
    };
}

models::DiTSampler make_dit_sampler(std::vector<LatentGrid> latents, std::size_t patch_size,
                                    const TextureMemory* memory, const TextureExtractor* extractor, std::size_t topk) {
    if (latents.empty()) throw ConfigError("DiT sampler needs at least one latent");
    if (memory && !extractor) throw ConfigError("DiT sampler needs an extractor with a texture memory");
    for (const LatentGrid& l : latents) {
        if (l.height() < patch_size || l.width() < patch_size) throw ShapeError("DiT crop exceeds latent");
    }
    auto shared = std::make_shared<const std::vector<LatentGrid>>(std::move(latents));
    return [shared, patch_size, memory, extractor, topk](std::mt19937_64& rng) {
        const auto& all = *shared;
        const LatentGrid& src = all[std::uniform_int_distribution<std::size_t>(0, all.size() - 1)(rng)];
        const PatchAnchor a{std::uniform_int_distribution<std::size_t>(0, src.height() - patch_size)(rng),
                            std::uniform_int_distribution<std::size_t>(0, src.width() - patch_size)(rng)};
        models::DiTExample ex{extract_patch(src, a, patch_size), std::nullopt};
        if (memory) {
            try {
                ex.prompt = retrieve_topk(*memory, ex.x0, *extractor, topk);
            } catch (const DegenerateQueryError&) {
            }
        }
        return ex;
    };
}

}  // namespace patchscaler
