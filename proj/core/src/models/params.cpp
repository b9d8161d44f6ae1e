// SPDX-License-Identifier: Apache-2.0
#include "patchscaler/models/params.hpp"

#include <cmath>
#include <set>

#include "../binary_io.hpp"
#include "patchscaler/error.hpp"

namespace patchscaler::models {

void snap_to_float(Matrix& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<double>(static_cast<float>(m.data()[i]));
}

void zero_all(const std::vector<NamedParam>& params) {
    for (const NamedParam& p : params) p.value->setZero();
}

Matrix random_matrix(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, stddev);
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
    snap_to_float(m);
    return m;
}

const CheckpointSection& Checkpoint::section(const std::string& name) const {
    for (const CheckpointSection& s : sections) {
        if (s.name == name) return s;
    }
    throw IoError(IoErrorKind::malformed, "checkpoint has no section '" + name + "'");
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    detail::ByteWriter w;
    w.put_bytes("PSCK");
    w.put_u32(kCheckpointVersion);
    w.put_u32(static_cast<std::uint32_t>(ckpt.sections.size()));
    for (const CheckpointSection& s : ckpt.sections) {
        if (s.data.size() != s.rows * s.cols) throw ShapeError("checkpoint section '" + s.name + "' has wrong length");
        w.put_u32(static_cast<std::uint32_t>(s.name.size()));
        w.put_bytes(s.name);
        w.put_u32(static_cast<std::uint32_t>(s.rows));
        w.put_u32(static_cast<std::uint32_t>(s.cols));
        for (float v : s.data) w.put_f32(v);
    }
    detail::write_file(path, w.buffer());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    detail::ByteReader r(detail::read_file(path), path.string());
    r.require(4);
    if (r.get_bytes(4) != "PSCK") throw IoError(IoErrorKind::magic_mismatch, path.string() + ": expected PSCK");
    const std::uint32_t version = r.get_u32();
    if (version != kCheckpointVersion) {
        throw IoError(IoErrorKind::version_mismatch, path.string() + ": checkpoint version " + std::to_string(version));
    }
    const std::uint32_t count = r.get_u32();
    Checkpoint ckpt;
    std::set<std::string> seen;
    for (std::uint32_t i = 0; i < count; ++i) {
        CheckpointSection s;
        const std::uint32_t name_len = r.get_u32();
        s.name = r.get_bytes(name_len);
        if (!seen.insert(s.name).second) throw IoError(IoErrorKind::malformed, "duplicate section '" + s.name + "'");
        s.rows = r.get_u32();
        s.cols = r.get_u32();
        r.require(4 * s.rows * s.cols);
        s.data.resize(s.rows * s.cols);
        for (float& v : s.data) v = r.get_f32();
        ckpt.sections.push_back(std::move(s));
    }
    if (r.remaining() != 0) throw IoError(IoErrorKind::dimension_mismatch, path.string() + ": trailing bytes");
    return ckpt;
}

CheckpointSection to_section(const std::string& name, const Matrix& m) {
    CheckpointSection s{name, static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()), {}};
    s.data.reserve(s.rows * s.cols);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) s.data.push_back(static_cast<float>(m(r, c)));
    }
    return s;
}

void from_section(const CheckpointSection& s, Matrix& m) {
    if (static_cast<std::size_t>(m.rows()) != s.rows || static_cast<std::size_t>(m.cols()) != s.cols) {
        throw IoError(IoErrorKind::dimension_mismatch,
                      "section '" + s.name + "' is " + std::to_string(s.rows) + "x" + std::to_string(s.cols) +
                          ", expected " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
    for (std::size_t r = 0; r < s.rows; ++r) {
        for (std::size_t c = 0; c < s.cols; ++c) {
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = s.data[r * s.cols + c];
        }
    }
}

void append_params(Checkpoint& ckpt, const std::vector<NamedConstParam>& params) {
    for (const NamedConstParam& p : params) ckpt.sections.push_back(to_section(p.name, *p.value));
}

void read_params(const Checkpoint& ckpt, const std::vector<NamedParam>& params) {
    for (const NamedParam& p : params) from_section(ckpt.section(p.name), *p.value);
}

Adam::Adam(std::vector<NamedParam> params, AdamOptions options) : m_params(std::move(params)), m_options(options) {
    for (const NamedParam& p : m_params) {
        m_first.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
        m_second.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
    }
}

void Adam::step(const std::vector<NamedParam>& grads) {
    if (grads.size() != m_params.size()) throw ShapeError("optimizer gradient list does not match parameters");
    ++m_step;
    const double bc1 = 1.0 - std::pow(m_options.beta1, static_cast<double>(m_step));
    const double bc2 = 1.0 - std::pow(m_options.beta2, static_cast<double>(m_step));
    for (std::size_t i = 0; i < m_params.size(); ++i) {
        Matrix& p = *m_params[i].value;
        const Matrix& g = *grads[i].value;
        m_first[i] = m_options.beta1 * m_first[i] + (1.0 - m_options.beta1) * g;
        m_second[i] = m_options.beta2 * m_second[i] + (1.0 - m_options.beta2) * g.cwiseProduct(g);
        if (m_options.learning_rate == 0.0) continue;
        const Matrix denom = ((m_second[i] / bc2).array().sqrt() + m_options.epsilon).matrix();
        p -= m_options.learning_rate * (m_first[i] / bc1).cwiseQuotient(denom);
        snap_to_float(p);
    }
}

TrainResult train_toy(const std::vector<NamedParam>& params, const std::vector<NamedParam>& grads,
                      const Objective& objective, const TrainOptions& options) {
    if (options.steps < 1) throw ConfigError("training needs a positive step count");
    if (!(options.learning_rate >= 0.0)) throw ConfigError("learning rate must be non-negative");
    std::mt19937_64 rng(options.seed);
    Adam adam(params, AdamOptions{options.learning_rate});
    TrainResult result;
    result.loss_trace.reserve(static_cast<std::size_t>(options.steps));
    for (int step = 0; step < options.steps; ++step) {
        zero_all(grads);
        const double loss = objective(rng);
        if (!std::isfinite(loss)) {
            throw NumericError("training diverged: non-finite loss at step " + std::to_string(step));
        }
        result.loss_trace.push_back(loss);
        adam.step(grads);
    }
    return result;
}

}  // namespace patchscaler::models
