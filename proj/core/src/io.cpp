// SPDX-License-Identifier: Apache-2.0
#include "patchscaler/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "binary_io.hpp"
#include "patchscaler/error.hpp"

namespace patchscaler {

namespace detail {

std::vector<char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(IoErrorKind::open_failed, path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(IoErrorKind::open_failed, path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError(IoErrorKind::open_failed, "write failed: " + path.string());
}

}  // namespace detail

void save_grid(const LatentGrid& grid, const std::filesystem::path& path) {
    detail::ByteWriter w;
    w.put_bytes("PSG1 " + std::to_string(grid.channels()) + " " + std::to_string(grid.height()) + " " +
                std::to_string(grid.width()) + "\n");
    for (float v : grid.data()) w.put_f32(v);
    detail::write_file(path, w.buffer());
}

LatentGrid load_grid(const std::filesystem::path& path) {
    std::vector<char> bytes = detail::read_file(path);
    const auto newline = std::find(bytes.begin(), bytes.end(), '\n');
    if (bytes.size() < 4 || std::string_view(bytes.data(), 4) != "PSG1") {
        throw IoError(IoErrorKind::magic_mismatch, path.string() + ": expected PSG1 header");
    }
    if (newline == bytes.end()) throw IoError(IoErrorKind::truncated, path.string() + ": missing header line");

    std::istringstream header(std::string(bytes.begin() + 4, newline));
    long long c = 0, h = 0, w = 0;
    if (!(header >> c >> h >> w) || c <= 0 || h <= 0 || w <= 0) {
        throw IoError(IoErrorKind::dimension_mismatch, path.string() + ": invalid grid dimensions in header");
    }
    std::vector<char> payload(newline + 1, bytes.end());
    const GridShape shape{static_cast<std::size_t>(c), static_cast<std::size_t>(h), static_cast<std::size_t>(w)};
    detail::ByteReader r(std::move(payload), path.string());
    std::vector<float> data(shape.size());
    for (float& v : data) v = r.get_f32();
    if (r.remaining() != 0) {
        throw IoError(IoErrorKind::dimension_mismatch, path.string() + ": trailing bytes after grid payload");
    }
    return LatentGrid(shape, std::move(data));
}

void export_preview(const LatentGrid& grid, const std::filesystem::path& path, float lo, float hi) {
    if (grid.channels() != 1 && grid.channels() != 3) {
        throw ShapeError("preview export needs 1 or 3 channels, got " + std::to_string(grid.channels()));
    }
    if (!(hi > lo)) throw ConfigError("preview range must satisfy hi > lo");
    detail::ByteWriter w;
    w.put_bytes(std::string(grid.channels() == 1 ? "P5" : "P6") + "\n" + std::to_string(grid.width()) + " " +
                std::to_string(grid.height()) + "\n255\n");
    std::string pixels;
    for (std::size_t y = 0; y < grid.height(); ++y) {
        for (std::size_t x = 0; x < grid.width(); ++x) {
            for (std::size_t c = 0; c < grid.channels(); ++c) {
                const float t = (grid.at(c, y, x) - lo) / (hi - lo);
                const float clipped = std::clamp(std::isfinite(t) ? t : 0.0f, 0.0f, 1.0f);
                pixels.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(clipped * 255.0f))));
            }
        }
    }
    w.put_bytes(pixels);
    detail::write_file(path, w.buffer());
}

}  // namespace patchscaler
