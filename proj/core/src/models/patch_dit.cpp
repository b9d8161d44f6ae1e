// SPDX-License-Identifier: Apache-2.0
#include "patchscaler/models/patch_dit.hpp"

#include <cmath>
#include <string>

#include "patchscaler/error.hpp"

namespace patchscaler::models {

namespace {

Matrix sigmoid(const Matrix& z) { return (1.0 / (1.0 + (-z.array()).exp())).matrix(); }

Matrix silu(const Matrix& z) { return z.cwiseProduct(sigmoid(z)); }

Matrix silu_derivative(const Matrix& z) {
    const Matrix s = sigmoid(z);
    return (s.array() * (1.0 + z.array() * (1.0 - s.array()))).matrix();
}

Matrix col_sum(const Matrix& m) { return m.colwise().sum(); }

Matrix add_bias(Matrix m, const Matrix& bias) {
    m.rowwise() += bias.row(0);
    return m;
}

Matrix scale_columns(const Matrix& m, const Matrix& scale) {
    return (m.array().rowwise() * scale.row(0).array()).matrix();
}

Matrix row_softmax(const Matrix& s) {
    Matrix out(s.rows(), s.cols());
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
        const double mx = s.row(r).maxCoeff();
        out.row(r) = (s.row(r).array() - mx).exp().matrix();
        out.row(r) /= out.row(r).sum();
    }
    return out;
}

/// Scaled dot-product attention per head over already-projected q (L x d),
/// k and v (S x d). Returns the L x d concatenation of head outputs.
Matrix multi_head(const Matrix& q, const Matrix& k, const Matrix& v, std::size_t heads, std::vector<Matrix>* probs) {
    const Eigen::Index dh = q.cols() / static_cast<Eigen::Index>(heads);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    Matrix concat(q.rows(), q.cols());
    if (probs) probs->resize(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        const Eigen::Index off = static_cast<Eigen::Index>(h) * dh;
        const Matrix a = row_softmax(q.middleCols(off, dh) * k.middleCols(off, dh).transpose() * inv_sqrt);
        concat.middleCols(off, dh) = a * v.middleCols(off, dh);
        if (probs) (*probs)[h] = a;
    }
    return concat;
}

void multi_head_backward(const Matrix& d_concat, const Matrix& q, const Matrix& k, const Matrix& v,
                         const std::vector<Matrix>& probs, std::size_t heads, Matrix& dq, Matrix& dk, Matrix& dv) {
    const Eigen::Index dh = q.cols() / static_cast<Eigen::Index>(heads);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    dq = Matrix::Zero(q.rows(), q.cols());
    dk = Matrix::Zero(k.rows(), k.cols());
    dv = Matrix::Zero(v.rows(), v.cols());
    for (std::size_t h = 0; h < heads; ++h) {
        const Eigen::Index off = static_cast<Eigen::Index>(h) * dh;
        const Matrix& a = probs[h];
        const Matrix d_head = d_concat.middleCols(off, dh);
        const Matrix da = d_head * v.middleCols(off, dh).transpose();
        dv.middleCols(off, dh) = a.transpose() * d_head;
        const Eigen::VectorXd row_dot = (da.cwiseProduct(a)).rowwise().sum();
        const Matrix ds = (a.array() * (da.colwise() - row_dot).array()).matrix() * inv_sqrt;
        dq.middleCols(off, dh) = ds * k.middleCols(off, dh);
        dk.middleCols(off, dh) = ds.transpose() * q.middleCols(off, dh);
    }
}

struct BlockCache {
    Matrix h_in;
    Matrix sa_q, sa_k, sa_v, sa_concat;
    std::vector<Matrix> sa_probs;
    Matrix h_sa;
    bool cross = false;
    Matrix scale;  // 1 x width
    Matrix ca_q, ca_concat, ca_out;
    std::vector<Matrix> ca_probs;
    Matrix h_ca;
    Matrix ff_pre, ff_act;
};

struct ForwardCache {
    Matrix emb, t_pre, t_act, temb;
    Matrix tokens;
    std::vector<BlockCache> blocks;
    Matrix h_final, mod_scale, mod_shift, h_mod;
};

Matrix forward(const PatchDiTParams& p, const LatentGrid& x_t, int t, const PromptContext* ctx, ForwardCache* cache) {
    const PatchDiTConfig& cfg = p.config;
    ForwardCache local;
    ForwardCache& c = cache ? *cache : local;

    c.emb = time_embed(t, cfg.width);
    c.t_pre = add_bias(c.emb * p.time_w1, p.time_b1);
    c.t_act = silu(c.t_pre);
    c.temb = add_bias(c.t_act * p.time_w2, p.time_b2);

    c.tokens = patchify(x_t, cfg);
    Matrix h = add_bias(c.tokens * p.embed_w, p.embed_b) + p.position;
    h.rowwise() += c.temb.row(0);

    c.blocks.resize(p.blocks.size());
    for (std::size_t b = 0; b < p.blocks.size(); ++b) {
        const DiTBlockParams& bp = p.blocks[b];
        BlockCache& bc = c.blocks[b];
        bc.h_in = h;
        bc.sa_q = h * bp.sa_query;
        bc.sa_k = h * bp.sa_key;
        bc.sa_v = h * bp.sa_value;
        bc.sa_concat = multi_head(bc.sa_q, bc.sa_k, bc.sa_v, cfg.heads, &bc.sa_probs);
        bc.h_sa = h + bc.sa_concat * bp.sa_output;

        bc.cross = ctx != nullptr;
        if (bc.cross) {
            bc.scale = add_bias(c.temb * bp.scale_w, bp.scale_b);
            bc.ca_q = bc.h_sa * bp.cross.query;
            bc.ca_concat = multi_head(bc.ca_q, ctx->keys[b], ctx->values[b], cfg.heads, &bc.ca_probs);
            bc.ca_out = bc.ca_concat * bp.cross.output;
            bc.h_ca = bc.h_sa + scale_columns(bc.ca_out, bc.scale);
        } else {
            bc.h_ca = bc.h_sa;
        }

        bc.ff_pre = add_bias(bc.h_ca * bp.ff_w1, bp.ff_b1);
        bc.ff_act = silu(bc.ff_pre);
        h = bc.h_ca + add_bias(bc.ff_act * bp.ff_w2, bp.ff_b2);
    }

    c.h_final = h;
    c.mod_scale = add_bias(c.temb * p.mod_scale_w, p.mod_scale_b);
    c.mod_shift = add_bias(c.temb * p.mod_shift_w, p.mod_shift_b);
    c.h_mod = (h.array().rowwise() * (1.0 + c.mod_scale.row(0).array())).matrix();
    c.h_mod.rowwise() += c.mod_shift.row(0);
    return add_bias(c.h_mod * p.out_w, p.out_b);
}

void backward(const PatchDiTParams& p, const ForwardCache& c, const PromptContext* ctx, const Matrix& d_out,
              PatchDiTParams& g) {
    const PatchDiTConfig& cfg = p.config;
    g.out_w += c.h_mod.transpose() * d_out;
    g.out_b += col_sum(d_out);
    const Matrix d_hmod = d_out * p.out_w.transpose();

    Matrix d_h = (d_hmod.array().rowwise() * (1.0 + c.mod_scale.row(0).array())).matrix();
    const Matrix d_mscale = col_sum(d_hmod.cwiseProduct(c.h_final));
    const Matrix d_mshift = col_sum(d_hmod);
    g.mod_scale_w += c.temb.transpose() * d_mscale;
    g.mod_scale_b += d_mscale;
    g.mod_shift_w += c.temb.transpose() * d_mshift;
    g.mod_shift_b += d_mshift;
    Matrix d_temb = d_mscale * p.mod_scale_w.transpose() + d_mshift * p.mod_shift_w.transpose();

    Matrix d_prompt_tokens;
    if (ctx) d_prompt_tokens = Matrix::Zero(ctx->tokens.rows(), ctx->tokens.cols());

    for (std::size_t bi = p.blocks.size(); bi-- > 0;) {
        const DiTBlockParams& bp = p.blocks[bi];
        DiTBlockParams& bg = g.blocks[bi];
        const BlockCache& bc = c.blocks[bi];

        // feed-forward residual
        bg.ff_w2 += bc.ff_act.transpose() * d_h;
        bg.ff_b2 += col_sum(d_h);
        const Matrix d_pre = (d_h * bp.ff_w2.transpose()).cwiseProduct(silu_derivative(bc.ff_pre));
        bg.ff_w1 += bc.h_ca.transpose() * d_pre;
        bg.ff_b1 += col_sum(d_pre);
        Matrix d_hca = d_h + d_pre * bp.ff_w1.transpose();

        // time-scaled cross-attention residual
        Matrix d_hsa = d_hca;
        if (bc.cross) {
            const Matrix d_ca_out = scale_columns(d_hca, bc.scale);
            const Matrix d_scale = col_sum(d_hca.cwiseProduct(bc.ca_out));
            bg.scale_w += c.temb.transpose() * d_scale;
            bg.scale_b += d_scale;
            d_temb += d_scale * bp.scale_w.transpose();

            bg.cross.output += bc.ca_concat.transpose() * d_ca_out;
            const Matrix d_concat = d_ca_out * bp.cross.output.transpose();
            Matrix dq, dk, dv;
            multi_head_backward(d_concat, bc.ca_q, ctx->keys[bi], ctx->values[bi], bc.ca_probs, cfg.heads, dq, dk, dv);
            bg.cross.query += bc.h_sa.transpose() * dq;
            d_hsa += dq * bp.cross.query.transpose();
            bg.cross.key += ctx->tokens.transpose() * dk;
            bg.cross.value += ctx->tokens.transpose() * dv;
            d_prompt_tokens += dk * bp.cross.key.transpose() + dv * bp.cross.value.transpose();
        }

        // self-attention residual
        bg.sa_output += bc.sa_concat.transpose() * d_hsa;
        const Matrix d_concat = d_hsa * bp.sa_output.transpose();
        Matrix dq, dk, dv;
        multi_head_backward(d_concat, bc.sa_q, bc.sa_k, bc.sa_v, bc.sa_probs, cfg.heads, dq, dk, dv);
        bg.sa_query += bc.h_in.transpose() * dq;
        bg.sa_key += bc.h_in.transpose() * dk;
        bg.sa_value += bc.h_in.transpose() * dv;
        d_h = d_hsa + dq * bp.sa_query.transpose() + dk * bp.sa_key.transpose() + dv * bp.sa_value.transpose();
    }

    g.embed_w += c.tokens.transpose() * d_h;
    g.embed_b += col_sum(d_h);
    g.position += d_h;
    d_temb += col_sum(d_h);

    g.time_w2 += c.t_act.transpose() * d_temb;
    g.time_b2 += d_temb;
    const Matrix d_tpre = (d_temb * p.time_w2.transpose()).cwiseProduct(silu_derivative(c.t_pre));
    g.time_w1 += c.emb.transpose() * d_tpre;
    g.time_b1 += d_tpre;

    if (ctx) {
        const Matrix d_raw = d_prompt_tokens.array().colwise() * ctx->similarities.array();
        g.prompt_w += ctx->flat.transpose() * d_raw;
        g.prompt_b += col_sum(d_raw);
    }
}

void require_patch(const PatchDiTConfig& cfg, const LatentGrid& patch) {
    if (patch.channels() != cfg.channels || patch.height() != cfg.patch_size || patch.width() != cfg.patch_size) {
        throw ShapeError("Patch-DiT expects " + std::to_string(cfg.channels) + "x" + std::to_string(cfg.patch_size) +
                         "x" + std::to_string(cfg.patch_size) + " patches");
    }
}

Matrix zeros(std::size_t r, std::size_t c) {
    return Matrix::Zero(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

}  // namespace

void PatchDiTConfig::validate() const {
    if (channels == 0 || patch_size == 0 || token_size == 0 || width == 0 || depth == 0 || heads == 0 || ff_mult == 0) {
        throw ConfigError("Patch-DiT sizes must be positive");
    }
    if (patch_size % token_size != 0) throw ConfigError("Patch-DiT token size must divide the patch size");
    if (width % heads != 0) throw ConfigError("Patch-DiT width must be divisible by the head count");
    if (width % 2 != 0) throw ConfigError("Patch-DiT width must be even for the time embedding");
}

PatchDiTParams PatchDiTParams::zeros(const PatchDiTConfig& config) {
    config.validate();
    const std::size_t d = config.width;
    const std::size_t f = config.width * config.ff_mult;
    const std::size_t tok = config.token_dim();
    PatchDiTParams p;
    p.config = config;
    p.embed_w = models::zeros(tok, d);
    p.embed_b = models::zeros(1, d);
    p.position = models::zeros(config.tokens(), d);
    p.time_w1 = models::zeros(d, d);
    p.time_b1 = models::zeros(1, d);
    p.time_w2 = models::zeros(d, d);
    p.time_b2 = models::zeros(1, d);
    p.prompt_w = models::zeros(config.prompt_dim(), d);
    p.prompt_b = models::zeros(1, d);
    p.blocks.resize(config.depth);
    for (DiTBlockParams& b : p.blocks) {
        b.sa_query = b.sa_key = b.sa_value = b.sa_output = models::zeros(d, d);
        b.cross.query = b.cross.key = b.cross.value = b.cross.output = models::zeros(d, d);
        b.scale_w = models::zeros(d, d);
        b.scale_b = models::zeros(1, d);
        b.ff_w1 = models::zeros(d, f);
        b.ff_b1 = models::zeros(1, f);
        b.ff_w2 = models::zeros(f, d);
        b.ff_b2 = models::zeros(1, d);
    }
    p.mod_scale_w = p.mod_shift_w = models::zeros(d, d);
    p.mod_scale_b = p.mod_shift_b = models::zeros(1, d);
    p.out_w = models::zeros(d, tok);
    p.out_b = models::zeros(1, tok);
    return p;
}

std::vector<NamedParam> PatchDiTParams::parameters() {
    std::vector<NamedParam> out{{"embed.w", &embed_w},      {"embed.b", &embed_b}, {"position", &position},
                                {"time.w1", &time_w1},      {"time.b1", &time_b1}, {"time.w2", &time_w2},
                                {"time.b2", &time_b2},      {"prompt.w", &prompt_w}, {"prompt.b", &prompt_b}};
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        DiTBlockParams& b = blocks[i];
        const std::string pre = "block" + std::to_string(i) + ".";
        out.insert(out.end(), {{pre + "sa.q", &b.sa_query},
                               {pre + "sa.k", &b.sa_key},
                               {pre + "sa.v", &b.sa_value},
                               {pre + "sa.o", &b.sa_output},
                               {pre + "ca.q", &b.cross.query},
                               {pre + "ca.k", &b.cross.key},
                               {pre + "ca.v", &b.cross.value},
                               {pre + "ca.o", &b.cross.output},
                               {pre + "ca.scale.w", &b.scale_w},
                               {pre + "ca.scale.b", &b.scale_b},
                               {pre + "ff.w1", &b.ff_w1},
                               {pre + "ff.b1", &b.ff_b1},
                               {pre + "ff.w2", &b.ff_w2},
                               {pre + "ff.b2", &b.ff_b2}});
    }
    out.insert(out.end(), {{"mod.scale.w", &mod_scale_w},
                           {"mod.scale.b", &mod_scale_b},
                           {"mod.shift.w", &mod_shift_w},
                           {"mod.shift.b", &mod_shift_b},
                           {"out.w", &out_w},
                           {"out.b", &out_b}});
    return out;
}

std::vector<NamedConstParam> PatchDiTParams::parameters() const {
    std::vector<NamedConstParam> out;
    for (const NamedParam& p : const_cast<PatchDiTParams*>(this)->parameters()) out.push_back({p.name, p.value});
    return out;
}

PatchDiTParams init_patch_dit(const PatchDiTConfig& config, std::uint64_t seed) {
    PatchDiTParams p = PatchDiTParams::zeros(config);
    std::mt19937_64 rng(seed);
    const double d = static_cast<double>(config.width);
    const double f = static_cast<double>(config.width * config.ff_mult);
    const double inv_d = 1.0 / std::sqrt(d);
    auto rnd = [&](const Matrix& like, double stddev) {
        return random_matrix(static_cast<std::size_t>(like.rows()), static_cast<std::size_t>(like.cols()), stddev, rng);
    };
    p.embed_w = rnd(p.embed_w, 1.0 / std::sqrt(static_cast<double>(config.token_dim())));
    p.position = rnd(p.position, 0.02);
    p.time_w1 = rnd(p.time_w1, inv_d);
    p.time_w2 = rnd(p.time_w2, inv_d);
    p.prompt_w = rnd(p.prompt_w, 1.0 / std::sqrt(static_cast<double>(config.prompt_dim())));
    for (DiTBlockParams& b : p.blocks) {
        b.sa_query = rnd(b.sa_query, inv_d);
        b.sa_key = rnd(b.sa_key, inv_d);
        b.sa_value = rnd(b.sa_value, inv_d);
        b.sa_output = rnd(b.sa_output, 0.5 * inv_d);
        b.cross.query = rnd(b.cross.query, inv_d);
        b.cross.key = rnd(b.cross.key, inv_d);
        b.cross.value = rnd(b.cross.value, inv_d);
        b.cross.output = rnd(b.cross.output, 0.5 * inv_d);
        b.scale_w = rnd(b.scale_w, 0.1 * inv_d);
        b.ff_w1 = rnd(b.ff_w1, inv_d);
        b.ff_w2 = rnd(b.ff_w2, 0.5 / std::sqrt(f));
    }
    p.mod_scale_w = rnd(p.mod_scale_w, 0.1 * inv_d);
    p.mod_shift_w = rnd(p.mod_shift_w, 0.1 * inv_d);
    p.out_w = rnd(p.out_w, 0.1 * inv_d);
    return p;
}

Checkpoint to_checkpoint(const PatchDiTParams& params) {
    const PatchDiTConfig& c = params.config;
    Matrix meta(1, 7);
    meta << static_cast<double>(c.channels), static_cast<double>(c.patch_size), static_cast<double>(c.token_size),
        static_cast<double>(c.width), static_cast<double>(c.depth), static_cast<double>(c.heads),
        static_cast<double>(c.ff_mult);
    Checkpoint ckpt;
    ckpt.sections.push_back(to_section("meta.patch_dit", meta));
    append_params(ckpt, params.parameters());
    return ckpt;
}

PatchDiTParams patch_dit_from_checkpoint(const Checkpoint& ckpt) {
    Matrix meta(1, 7);
    from_section(ckpt.section("meta.patch_dit"), meta);
    auto field = [&](int i) {
        const double v = meta(0, i);
        if (!(v >= 1.0) || v != std::floor(v)) throw IoError(IoErrorKind::malformed, "invalid Patch-DiT metadata");
        return static_cast<std::size_t>(v);
    };
    PatchDiTConfig cfg{field(0), field(1), field(2), field(3), field(4), field(5), field(6)};
    PatchDiTParams p = PatchDiTParams::zeros(cfg);
    read_params(ckpt, p.parameters());
    return p;
}

RowVector time_embed(int t, std::size_t dim) {
    if (dim == 0 || dim % 2 != 0) throw ConfigError("time embedding dimension must be positive and even");
    const std::size_t half = dim / 2;
    RowVector e(static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
        e(static_cast<Eigen::Index>(i)) = std::sin(t * freq);
        e(static_cast<Eigen::Index>(half + i)) = std::cos(t * freq);
    }
    return e;
}

RowVector cross_attention_scale(const PatchDiTParams& params, std::size_t block, int t) {
    if (block >= params.blocks.size()) throw ConfigError("block index out of range");
    const Matrix emb = time_embed(t, params.config.width);
    const Matrix temb = add_bias(silu(add_bias(emb * params.time_w1, params.time_b1)) * params.time_w2, params.time_b2);
    return add_bias(temb * params.blocks[block].scale_w, params.blocks[block].scale_b).row(0);
}

Matrix encode_prompt(const PatchDiTParams& params, const RetrievalResult& prompt) {
    return make_prompt_context(params, prompt).tokens;
}

PromptContext make_prompt_context(const PatchDiTParams& params, const RetrievalResult& prompt) {
    const PatchDiTConfig& cfg = params.config;
    if (prompt.size() == 0) throw ConfigError("texture prompt is empty");
    if (prompt.similarities.size() != prompt.size() || prompt.priors.size() != prompt.size()) {
        throw ShapeError("texture prompt fields have inconsistent lengths");
    }
    const auto k = static_cast<Eigen::Index>(prompt.size());
    PromptContext ctx;
    ctx.flat.resize(k, static_cast<Eigen::Index>(cfg.prompt_dim()));
    ctx.similarities.resize(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        const LatentGrid& prior = prompt.priors[static_cast<std::size_t>(i)];
        if (prior.size() != cfg.prompt_dim()) throw ShapeError("texture prior size does not match Patch-DiT prompt input");
        for (std::size_t j = 0; j < prior.size(); ++j) ctx.flat(i, static_cast<Eigen::Index>(j)) = prior.data()[j];
        ctx.similarities(i) = prompt.similarities[static_cast<std::size_t>(i)];
    }
    ctx.tokens = add_bias(ctx.flat * params.prompt_w, params.prompt_b);
    ctx.tokens = ctx.tokens.array().colwise() * ctx.similarities.array();
    for (const DiTBlockParams& b : params.blocks) {
        ctx.keys.push_back(ctx.tokens * b.cross.key);
        ctx.values.push_back(ctx.tokens * b.cross.value);
    }
    return ctx;
}

Matrix cross_attend(const Matrix& tokens, const Matrix& prompt_tokens, const RowVector& scale,
                    const CrossAttentionWeights& w, std::size_t heads) {
    if (tokens.cols() != w.query.rows() || prompt_tokens.cols() != w.key.rows() || scale.size() != tokens.cols()) {
        throw ShapeError("cross-attention dimension mismatch");
    }
    if (prompt_tokens.rows() == 0) throw ConfigError("cross-attention needs at least one prompt token");
    if (heads == 0 || tokens.cols() % static_cast<Eigen::Index>(heads) != 0) {
        throw ConfigError("cross-attention width must be divisible by the head count");
    }
    const Matrix concat = multi_head(tokens * w.query, prompt_tokens * w.key, prompt_tokens * w.value, heads, nullptr);
    return tokens + scale_columns(concat * w.output, scale);
}

Matrix patchify(const LatentGrid& patch, const PatchDiTConfig& cfg) {
    require_patch(cfg, patch);
    const std::size_t p = cfg.token_size;
    const std::size_t per_side = cfg.patch_size / p;
    Matrix tokens(static_cast<Eigen::Index>(cfg.tokens()), static_cast<Eigen::Index>(cfg.token_dim()));
    for (std::size_t ty = 0; ty < per_side; ++ty) {
        for (std::size_t tx = 0; tx < per_side; ++tx) {
            const auto row = static_cast<Eigen::Index>(ty * per_side + tx);
            Eigen::Index col = 0;
            for (std::size_t c = 0; c < cfg.channels; ++c) {
                for (std::size_t y = 0; y < p; ++y) {
                    for (std::size_t x = 0; x < p; ++x) tokens(row, col++) = patch.at(c, ty * p + y, tx * p + x);
                }
            }
        }
    }
    return tokens;
}

LatentGrid unpatchify(const Matrix& tokens, const PatchDiTConfig& cfg) {
    if (tokens.rows() != static_cast<Eigen::Index>(cfg.tokens()) ||
        tokens.cols() != static_cast<Eigen::Index>(cfg.token_dim())) {
        throw ShapeError("token matrix does not match Patch-DiT configuration");
    }
    const std::size_t p = cfg.token_size;
    const std::size_t per_side = cfg.patch_size / p;
    LatentGrid patch(cfg.channels, cfg.patch_size, cfg.patch_size);
    for (std::size_t ty = 0; ty < per_side; ++ty) {
        for (std::size_t tx = 0; tx < per_side; ++tx) {
            const auto row = static_cast<Eigen::Index>(ty * per_side + tx);
            Eigen::Index col = 0;
            for (std::size_t c = 0; c < cfg.channels; ++c) {
                for (std::size_t y = 0; y < p; ++y) {
                    for (std::size_t x = 0; x < p; ++x) {
                        patch.at(c, ty * p + y, tx * p + x) = static_cast<float>(tokens(row, col++));
                    }
                }
            }
        }
    }
    return patch;
}

LatentGrid denoise_patchdit(const PatchDiTParams& params, const LatentGrid& x_t, int t, const RetrievalResult* prompt) {
    require_patch(params.config, x_t);
    if (prompt && prompt->size() > 0) {
        const PromptContext ctx = make_prompt_context(params, *prompt);
        return unpatchify(forward(params, x_t, t, &ctx, nullptr), params.config);
    }
    return unpatchify(forward(params, x_t, t, nullptr, nullptr), params.config);
}

double patch_dit_loss(const PatchDiTParams& params, const LatentGrid& x_t, int t, const LatentGrid& x0,
                      const RetrievalResult* prompt, PatchDiTParams* grads, double grad_scale) {
    require_patch(params.config, x_t);
    require_patch(params.config, x0);
    std::optional<PromptContext> ctx;
    if (prompt && prompt->size() > 0) ctx = make_prompt_context(params, *prompt);
    const PromptContext* ctx_ptr = ctx ? &*ctx : nullptr;

    ForwardCache cache;
    const Matrix out = forward(params, x_t, t, ctx_ptr, &cache);
    const Matrix target = patchify(x0, params.config);
    const Matrix diff = out - target;
    const double n = static_cast<double>(diff.size());
    const double loss = diff.squaredNorm() / n;
    if (grads) {
        const Matrix d_out = diff * (2.0 * grad_scale / n);
        backward(params, cache, ctx_ptr, d_out, *grads);
    }
    return loss;
}

PatchDiT::PatchDiT(PatchDiTParams params) : m_params(std::move(params)) { m_params.config.validate(); }

LatentGrid PatchDiT::denoise(const LatentGrid& x_t, int t, const RetrievalResult* prompt) const {
    return denoise_patchdit(m_params, x_t, t, prompt);
}

Denoiser::BoundFn PatchDiT::bind_prompt(const RetrievalResult* prompt) const {
    std::shared_ptr<const PromptContext> ctx;
    if (prompt && prompt->size() > 0) ctx = std::make_shared<const PromptContext>(make_prompt_context(m_params, *prompt));
    return [this, ctx](const LatentGrid& x_t, int t) {
        require_patch(m_params.config, x_t);
        return unpatchify(forward(m_params, x_t, t, ctx.get(), nullptr), m_params.config);
    };
}

TrainResult train_patch_dit(PatchDiTParams& params, const NoiseSchedule& schedule, const DiTSampler& sampler,
                            const DiTTrainOptions& options) {
    if (options.batch < 1) throw ConfigError("batch size must be positive");
    schedule.require_step(options.max_step);
    PatchDiTParams grads = PatchDiTParams::zeros(params.config);
    const double inv_batch = 1.0 / options.batch;
    Objective objective = [&](std::mt19937_64& rng) {
        std::uniform_int_distribution<int> step_dist(1, options.max_step);
        std::normal_distribution<float> normal(0.0f, 1.0f);
        double loss = 0.0;
        for (int b = 0; b < options.batch; ++b) {
            const DiTExample ex = sampler(rng);
            const int t = step_dist(rng);
            LatentGrid eps(ex.x0.shape());
            for (float& v : eps.data()) v = normal(rng);
            const LatentGrid x_t = forward_sample(schedule, ex.x0, t, eps);
            loss += patch_dit_loss(params, x_t, t, ex.x0, ex.prompt ? &*ex.prompt : nullptr, &grads, inv_batch);
        }
        return loss * inv_batch;
    };
    return train_toy(params.parameters(), grads.parameters(), objective, options.train);
}

}  // namespace patchscaler::models
