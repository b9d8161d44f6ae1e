// SPDX-License-Identifier: Apache-2.0
#include "patchscaler/models/grm.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "patchscaler/error.hpp"

namespace patchscaler::models {

namespace {

constexpr std::size_t kTaps = 9;

Matrix to_matrix(const LatentGrid& g) {
    const auto cells = static_cast<Eigen::Index>(g.shape().plane());
    Matrix m(static_cast<Eigen::Index>(g.channels()), cells);
    auto d = g.data();
    for (Eigen::Index c = 0; c < m.rows(); ++c) {
        for (Eigen::Index i = 0; i < cells; ++i) m(c, i) = d[static_cast<std::size_t>(c * cells + i)];
    }
    return m;
}

LatentGrid to_grid(const Matrix& m, std::size_t h, std::size_t w) {
    LatentGrid g(static_cast<std::size_t>(m.rows()), h, w);
    auto d = g.data();
    const Eigen::Index cells = m.cols();
    for (Eigen::Index c = 0; c < m.rows(); ++c) {
        for (Eigen::Index i = 0; i < cells; ++i) d[static_cast<std::size_t>(c * cells + i)] = static_cast<float>(m(c, i));
    }
    return g;
}

Matrix im2col(const Matrix& in, std::size_t h, std::size_t w) {
    const Eigen::Index ch = in.rows();
    Matrix col = Matrix::Zero(ch * static_cast<Eigen::Index>(kTaps), in.cols());
    for (Eigen::Index c = 0; c < ch; ++c) {
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const Eigen::Index row = c * 9 + ky * 3 + kx;
                for (std::size_t y = 0; y < h; ++y) {
                    const long sy = static_cast<long>(y) + ky - 1;
                    if (sy < 0 || sy >= static_cast<long>(h)) continue;
                    for (std::size_t x = 0; x < w; ++x) {
                        const long sx = static_cast<long>(x) + kx - 1;
                        if (sx < 0 || sx >= static_cast<long>(w)) continue;
                        col(row, static_cast<Eigen::Index>(y * w + x)) =
                            in(c, static_cast<Eigen::Index>(static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)));
                    }
                }
            }
        }
    }
    return col;
}

Matrix col2im(const Matrix& col, std::size_t ch, std::size_t h, std::size_t w) {
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(ch), col.cols());
    for (std::size_t c = 0; c < ch; ++c) {
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const auto row = static_cast<Eigen::Index>(c * 9 + static_cast<std::size_t>(ky * 3 + kx));
                for (std::size_t y = 0; y < h; ++y) {
                    const long sy = static_cast<long>(y) + ky - 1;
                    if (sy < 0 || sy >= static_cast<long>(h)) continue;
                    for (std::size_t x = 0; x < w; ++x) {
                        const long sx = static_cast<long>(x) + kx - 1;
                        if (sx < 0 || sx >= static_cast<long>(w)) continue;
                        out(static_cast<Eigen::Index>(c),
                            static_cast<Eigen::Index>(static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx))) +=
                            col(row, static_cast<Eigen::Index>(y * w + x));
                    }
                }
            }
        }
    }
    return out;
}

Matrix conv(const ConvLayer& layer, const Matrix& col) {
    Matrix out = layer.weight * col;
    out.colwise() += layer.bias.col(0);
    return out;
}

Matrix sigmoid(const Matrix& z) { return (1.0 / (1.0 + (-z.array()).exp())).matrix(); }

struct Forward {
    std::vector<Matrix> cols;  // im2col of each trunk input, then of the trunk output
    std::vector<Matrix> pre;   // trunk pre-activations
    Matrix features;
    Matrix sigma;              // unclamped sigmoid of the confidence head
    Matrix confidence;
};

Forward run(const GrmParams& p, const LatentGrid& input) {
    const GrmConfig& cfg = p.config;
    if (input.channels() != cfg.channels) {
        throw ShapeError("GRM expects " + std::to_string(cfg.channels) + " input channels, got " +
                         std::to_string(input.channels()));
    }
    if (input.empty()) throw ShapeError("GRM input is empty");
    const std::size_t h = input.height();
    const std::size_t w = input.width();
    Forward f;
    const Matrix x = to_matrix(input);
    Matrix act = x;
    for (const ConvLayer& layer : p.trunk) {
        f.cols.push_back(im2col(act, h, w));
        f.pre.push_back(conv(layer, f.cols.back()));
        const Matrix& z = f.pre.back();
        act = z.cwiseProduct(sigmoid(z));
    }
    f.cols.push_back(im2col(act, h, w));
    f.features = x + conv(p.feature_head, f.cols.back());
    f.sigma = sigmoid(conv(p.confidence_head, f.cols.back()));
    f.confidence = f.sigma.cwiseMax(static_cast<double>(kMinConfidence)).cwiseMin(1.0);
    return f;
}

}  // namespace

void GrmConfig::validate() const {
    if (channels == 0 || features == 0) throw ConfigError("GRM channel and feature counts must be positive");
}

GrmParams GrmParams::zeros(const GrmConfig& config) {
    config.validate();
    const auto f = static_cast<Eigen::Index>(config.features);
    const auto c = static_cast<Eigen::Index>(config.channels);
    const auto taps = static_cast<Eigen::Index>(kTaps);
    GrmParams p;
    p.config = config;
    for (std::size_t l = 0; l < config.layers; ++l) {
        const Eigen::Index in = l == 0 ? c : f;
        p.trunk.push_back({Matrix::Zero(f, in * taps), Matrix::Zero(f, 1)});
    }
    const Eigen::Index head_in = config.layers == 0 ? c : f;
    p.feature_head = {Matrix::Zero(c, head_in * taps), Matrix::Zero(c, 1)};
    p.confidence_head = {Matrix::Zero(1, head_in * taps), Matrix::Zero(1, 1)};
    return p;
}

std::vector<NamedParam> GrmParams::parameters() {
    std::vector<NamedParam> out;
    for (std::size_t l = 0; l < trunk.size(); ++l) {
        const std::string pre = "trunk" + std::to_string(l) + ".";
        out.push_back({pre + "w", &trunk[l].weight});
        out.push_back({pre + "b", &trunk[l].bias});
    }
    out.push_back({"feature.w", &feature_head.weight});
    out.push_back({"feature.b", &feature_head.bias});
    out.push_back({"confidence.w", &confidence_head.weight});
    out.push_back({"confidence.b", &confidence_head.bias});
    return out;
}

std::vector<NamedConstParam> GrmParams::parameters() const {
    std::vector<NamedConstParam> out;
    for (const NamedParam& p : const_cast<GrmParams*>(this)->parameters()) out.push_back({p.name, p.value});
    return out;
}

GrmParams init_grm(const GrmConfig& config, std::uint64_t seed) {
    GrmParams p = GrmParams::zeros(config);
    std::mt19937_64 rng(seed);
    for (ConvLayer& layer : p.trunk) {
        const double fan_in = static_cast<double>(layer.weight.cols());
        layer.weight = random_matrix(static_cast<std::size_t>(layer.weight.rows()),
                                     static_cast<std::size_t>(layer.weight.cols()), std::sqrt(2.0 / fan_in), rng);
    }
    const double head_std = 0.1 / std::sqrt(static_cast<double>(p.feature_head.weight.cols()));
    p.feature_head.weight = random_matrix(static_cast<std::size_t>(p.feature_head.weight.rows()),
                                          static_cast<std::size_t>(p.feature_head.weight.cols()), head_std, rng);
    p.confidence_head.weight = random_matrix(1, static_cast<std::size_t>(p.confidence_head.weight.cols()), head_std, rng);
    p.confidence_head.bias(0, 0) = 2.0;
    return p;
}

Checkpoint to_checkpoint(const GrmParams& params) {
    Matrix meta(1, 3);
    meta << static_cast<double>(params.config.channels), static_cast<double>(params.config.features),
        static_cast<double>(params.config.layers);
    Checkpoint ckpt;
    ckpt.sections.push_back(to_section("meta.grm", meta));
    append_params(ckpt, params.parameters());
    return ckpt;
}

GrmParams grm_from_checkpoint(const Checkpoint& ckpt) {
    Matrix meta(1, 3);
    from_section(ckpt.section("meta.grm"), meta);
    auto field = [&](int i, double min) {
        const double v = meta(0, i);
        if (!(v >= min) || v != std::floor(v)) throw IoError(IoErrorKind::malformed, "invalid GRM metadata");
        return static_cast<std::size_t>(v);
    };
    GrmParams p = GrmParams::zeros(GrmConfig{field(0, 1.0), field(1, 1.0), field(2, 0.0)});
    read_params(ckpt, p.parameters());
    return p;
}

GrmOutput grm_restore(const GrmParams& params, const LatentGrid& input) {
    const Forward f = run(params, input);
    return {to_grid(f.features, input.height(), input.width()), to_grid(f.confidence, input.height(), input.width())};
}

double grm_loss(const GrmParams& params, const LatentGrid& input, const LatentGrid& target, const LossParams& loss,
                GrmParams* grads, double grad_scale) {
    require_same_shape(input, target, "GRM target");
    const Forward f = run(params, input);
    const std::size_t ch = input.channels();
    const std::size_t cells = input.shape().plane();
    const std::size_t h = input.height();
    const std::size_t w = input.width();

    std::vector<double> y(ch * cells), x(ch * cells), c(cells), gy(ch * cells), gc(cells);
    auto t = target.data();
    for (std::size_t k = 0; k < ch; ++k) {
        for (std::size_t i = 0; i < cells; ++i) {
            y[k * cells + i] = f.features(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i));
            x[k * cells + i] = t[k * cells + i];
        }
    }
    for (std::size_t i = 0; i < cells; ++i) c[i] = f.confidence(0, static_cast<Eigen::Index>(i));
    const double value = confidence_loss_with_grad(y, x, c, ch, loss, gy, gc);
    if (!grads) return value;

    Matrix d_feat(static_cast<Eigen::Index>(ch), static_cast<Eigen::Index>(cells));
    for (std::size_t k = 0; k < ch; ++k) {
        for (std::size_t i = 0; i < cells; ++i) {
            d_feat(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = grad_scale * gy[k * cells + i];
        }
    }
    Matrix d_conf(1, static_cast<Eigen::Index>(cells));
    for (std::size_t i = 0; i < cells; ++i) {
        const auto j = static_cast<Eigen::Index>(i);
        const double s = f.sigma(0, j);
        d_conf(0, j) = s < kMinConfidence ? 0.0 : grad_scale * gc[i] * s * (1.0 - s);
    }

    const Matrix& head_col = f.cols.back();
    grads->feature_head.weight += d_feat * head_col.transpose();
    grads->feature_head.bias += d_feat.rowwise().sum();
    grads->confidence_head.weight += d_conf * head_col.transpose();
    grads->confidence_head.bias += d_conf.rowwise().sum();
    if (params.trunk.empty()) return value;

    const std::size_t feats = params.config.features;
    Matrix d_act = col2im(params.feature_head.weight.transpose() * d_feat +
                              params.confidence_head.weight.transpose() * d_conf,
                          feats, h, w);
    for (std::size_t l = params.trunk.size(); l-- > 0;) {
        const Matrix& z = f.pre[l];
        const Matrix s = sigmoid(z);
        const Matrix dz = d_act.cwiseProduct((s.array() * (1.0 + z.array() * (1.0 - s.array()))).matrix());
        grads->trunk[l].weight += dz * f.cols[l].transpose();
        grads->trunk[l].bias += dz.rowwise().sum();
        if (l > 0) d_act = col2im(params.trunk[l].weight.transpose() * dz, feats, h, w);
    }
    return value;
}

TrainResult train_grm(GrmParams& params, const GrmSampler& sampler, const GrmTrainOptions& options) {
    if (options.batch < 1) throw ConfigError("batch size must be positive");
    options.loss.validate();
    GrmParams grads = GrmParams::zeros(params.config);
    const double inv_batch = 1.0 / options.batch;
    Objective objective = [&](std::mt19937_64& rng) {
        double total = 0.0;
        for (int b = 0; b < options.batch; ++b) {
            const GrmExample ex = sampler(rng);
            total += grm_loss(params, ex.input, ex.target, options.loss, &grads, inv_batch);
        }
        return total * inv_batch;
    };
    return train_toy(params.parameters(), grads.parameters(), objective, options.train);
}

}  // namespace patchscaler::models
