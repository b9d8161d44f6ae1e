// SPDX-License-Identifier: Apache-2.0
#include "patchscaler/colornorm.hpp"

#include <algorithm>
#include <string>

#include "patchscaler/error.hpp"

namespace patchscaler {

namespace {

void require_levels(int levels) {
    if (levels < 1) throw ConfigError("wavelet level count must be positive");
}

}  // namespace

WaveletPyramid haar_forward(const LatentGrid& image, int levels) {
    require_levels(levels);
    const std::size_t block = std::size_t{1} << levels;
    if (image.empty() || image.height() % block != 0 || image.width() % block != 0) {
        throw ShapeError("image " + std::to_string(image.height()) + "x" + std::to_string(image.width()) +
                         " is not divisible by " + std::to_string(block));
    }
    WaveletPyramid p;
    LatentGrid cur = image;
    for (int l = 0; l < levels; ++l) {
        const std::size_t h = cur.height() / 2;
        const std::size_t w = cur.width() / 2;
        LatentGrid low(cur.channels(), h, w);
        WaveletLevel det{LatentGrid(cur.channels(), h, w), LatentGrid(cur.channels(), h, w),
                         LatentGrid(cur.channels(), h, w)};
        for (std::size_t c = 0; c < cur.channels(); ++c) {
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t x = 0; x < w; ++x) {
                    const double a = cur.at(c, 2 * y, 2 * x);
                    const double b = cur.at(c, 2 * y, 2 * x + 1);
                    const double d = cur.at(c, 2 * y + 1, 2 * x);
                    const double e = cur.at(c, 2 * y + 1, 2 * x + 1);
                    low.at(c, y, x) = static_cast<float>((a + b + d + e) / 2.0);
                    det.horizontal.at(c, y, x) = static_cast<float>((a - b + d - e) / 2.0);
                    det.vertical.at(c, y, x) = static_cast<float>((a + b - d - e) / 2.0);
                    det.diagonal.at(c, y, x) = static_cast<float>((a - b - d + e) / 2.0);
                }
            }
        }
        p.levels.push_back(std::move(det));
        cur = std::move(low);
    }
    p.low = std::move(cur);
    return p;
}

LatentGrid haar_inverse(const WaveletPyramid& p) {
    LatentGrid cur = p.low;
    for (std::size_t l = p.levels.size(); l-- > 0;) {
        const WaveletLevel& det = p.levels[l];
        require_same_shape(det.horizontal, cur, "wavelet detail band");
        require_same_shape(det.vertical, cur, "wavelet detail band");
        require_same_shape(det.diagonal, cur, "wavelet detail band");
        LatentGrid up(cur.channels(), cur.height() * 2, cur.width() * 2);
        for (std::size_t c = 0; c < cur.channels(); ++c) {
            for (std::size_t y = 0; y < cur.height(); ++y) {
                for (std::size_t x = 0; x < cur.width(); ++x) {
                    const double ll = cur.at(c, y, x);
                    const double lh = det.horizontal.at(c, y, x);
                    const double hl = det.vertical.at(c, y, x);
                    const double hh = det.diagonal.at(c, y, x);
                    up.at(c, 2 * y, 2 * x) = static_cast<float>((ll + lh + hl + hh) / 2.0);
                    up.at(c, 2 * y, 2 * x + 1) = static_cast<float>((ll - lh + hl - hh) / 2.0);
                    up.at(c, 2 * y + 1, 2 * x) = static_cast<float>((ll + lh - hl - hh) / 2.0);
                    up.at(c, 2 * y + 1, 2 * x + 1) = static_cast<float>((ll - lh - hl + hh) / 2.0);
                }
            }
        }
        cur = std::move(up);
    }
    return cur;
}

LatentGrid wavelet_color_normalize(const LatentGrid& sr, const LatentGrid& lr_up, int levels) {
    require_same_shape(sr, lr_up, "color reference");
    WaveletPyramid p = haar_forward(sr, levels);
    p.low = haar_forward(lr_up, levels).low;
    return haar_inverse(p);
}

LatentGrid pad_to_multiple(const LatentGrid& image, std::size_t multiple) {
    if (multiple == 0) throw ConfigError("padding multiple must be positive");
    if (image.empty()) throw ShapeError("cannot pad an empty image");
    const std::size_t h = (image.height() + multiple - 1) / multiple * multiple;
    const std::size_t w = (image.width() + multiple - 1) / multiple * multiple;
    LatentGrid out(image.channels(), h, w);
    for (std::size_t c = 0; c < image.channels(); ++c) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                out.at(c, y, x) = image.at(c, std::min(y, image.height() - 1), std::min(x, image.width() - 1));
            }
        }
    }
    return out;
}

LatentGrid crop(const LatentGrid& image, std::size_t height, std::size_t width) {
    if (height > image.height() || width > image.width()) throw ShapeError("crop larger than image");
    LatentGrid out(image.channels(), height, width);
    for (std::size_t c = 0; c < image.channels(); ++c) {
        for (std::size_t y = 0; y < height; ++y) {
            for (std::size_t x = 0; x < width; ++x) out.at(c, y, x) = image.at(c, y, x);
        }
    }
    return out;
}

}  // namespace patchscaler
