// Copyright 2026 The m11seg Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/// @file ingest.hpp
/// M11 intensity images: min-max normalization and the two resamplers.
///
/// Both resamplers place pixel centers at half-integer coordinates
/// (align-corners off): output pixel x maps to source coordinate
/// (x + 0.5) * src_width / dst_width - 0.5.

#ifndef M11SEG_INGEST_HPP
#define M11SEG_INGEST_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "m11seg/raster.hpp"

namespace m11seg {

inline constexpr int kMaxAcquisitionDay = 18;

struct M11Image {
    Raster<float> pixels;
    std::string sample_id;
    int acquisition_day = 0;
    Size original_size;

    int width() const noexcept { return pixels.width(); }
    int height() const noexcept { return pixels.height(); }
    Size size() const noexcept { return pixels.size(); }
};

struct NormalizeOptions {
    /// Clip to the [p, 100 - p] percentile range before min-max; off by default.
    std::optional<double> clip_percentile;
};

namespace detail {

inline double percentile(std::vector<float> values, double pct) {
    const double rank = std::clamp(pct, 0.0, 100.0) / 100.0 * double(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const auto hi = std::min(lo + 1, values.size() - 1);
    std::nth_element(values.begin(), values.begin() + lo, values.end());
    const double vlo = values[lo];
    if (hi == lo) return vlo;
    const double vhi = *std::min_element(values.begin() + lo + 1, values.end());
    return vlo + (rank - double(lo)) * (vhi - vlo);
}

inline void check_target(Size target) {
    if (target.width <= 0 || target.height <= 0)
        throw InvalidArgument("resize target dimensions must be positive");
}

// Nearest source index under the half-integer center convention.
inline int nearest_source(int dst, int dst_len, int src_len) {
    const double s = (dst + 0.5) * double(src_len) / double(dst_len);
    return std::clamp(static_cast<int>(std::floor(s)), 0, src_len - 1);
}

}  // namespace detail

/// Min-max normalize to [0, 1]; a constant image maps to all zeros.
inline M11Image normalize_m11(const M11Image& img, const NormalizeOptions& opts = {}) {
    if (img.pixels.empty()) throw InvalidArgument("cannot normalize an empty image");
    const auto px = img.pixels.pixels();

    double lo = 0.0;
    double hi = 0.0;
    if (opts.clip_percentile) {
        std::vector<float> copy(px.begin(), px.end());
        lo = detail::percentile(copy, *opts.clip_percentile);
        hi = detail::percentile(std::move(copy), 100.0 - *opts.clip_percentile);
    } else {
        const auto [mn, mx] = std::minmax_element(px.begin(), px.end());
        lo = *mn;
        hi = *mx;
    }

    M11Image out = img;
    auto dst = out.pixels.pixels();
    if (!(hi > lo)) {
        std::fill(dst.begin(), dst.end(), 0.0f);
        return out;
    }
    const double range = hi - lo;
    for (std::size_t i = 0; i < dst.size(); ++i) {
        const double v = (double(px[i]) - lo) / range;
        dst[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
    return out;
}

/// Bilinear resample of a float raster.
inline Raster<float> resize_bilinear(const Raster<float>& src, Size target) {
    detail::check_target(target);
    if (src.empty()) throw InvalidArgument("cannot resize an empty raster");
    if (src.size() == target) return src;

    const int sw = src.width();
    const int sh = src.height();
    const double sx_scale = double(sw) / target.width;
    const double sy_scale = double(sh) / target.height;

    // Precompute horizontal taps once per column.
    std::vector<int> x0(target.width), x1(target.width);
    std::vector<double> wx(target.width);
    for (int x = 0; x < target.width; ++x) {
        const double s = std::clamp((x + 0.5) * sx_scale - 0.5, 0.0, double(sw - 1));
        x0[x] = static_cast<int>(std::floor(s));
        x1[x] = std::min(x0[x] + 1, sw - 1);
        wx[x] = s - x0[x];
    }

    Raster<float> out(target.width, target.height);
    for (int y = 0; y < target.height; ++y) {
        const double s = std::clamp((y + 0.5) * sy_scale - 0.5, 0.0, double(sh - 1));
        const int y0 = static_cast<int>(std::floor(s));
        const int y1 = std::min(y0 + 1, sh - 1);
        const double wy = s - y0;
        for (int x = 0; x < target.width; ++x) {
            const double top = src(x0[x], y0) * (1.0 - wx[x]) + src(x1[x], y0) * wx[x];
            const double bot = src(x0[x], y1) * (1.0 - wx[x]) + src(x1[x], y1) * wx[x];
            out(x, y) = static_cast<float>(top * (1.0 - wy) + bot * wy);
        }
    }
    return out;
}

/// Nearest-neighbor resample; never invents values absent from the input.
template <typename T>
Raster<T> resize_nearest(const Raster<T>& src, Size target) {
    detail::check_target(target);
    if (src.empty()) throw InvalidArgument("cannot resize an empty raster");
    if (src.size() == target) return src;

    std::vector<int> xs(target.width);
    for (int x = 0; x < target.width; ++x)
        xs[x] = detail::nearest_source(x, target.width, src.width());

    Raster<T> out(target.width, target.height);
    for (int y = 0; y < target.height; ++y) {
        const int sy = detail::nearest_source(y, target.height, src.height());
        for (int x = 0; x < target.width; ++x) out(x, y) = src(xs[x], sy);
    }
    return out;
}

/// Bilinear resize; metadata and original_size carry over unchanged.
inline M11Image resize_image(const M11Image& img, Size target) {
    M11Image out;
    out.pixels = resize_bilinear(img.pixels, target);
    out.sample_id = img.sample_id;
    out.acquisition_day = img.acquisition_day;
    out.original_size = img.original_size;
    return out;
}

inline ClassMap resize_mask(const ClassMap& map, Size target) {
    return ClassMap(resize_nearest(map.labels, target));
}

/// Reads a single-channel raster (8/16-bit integer or 32-bit float) without
/// normalizing it. Throws FileNotFound, MultiChannelInput or UnreadableFormat.
M11Image load_m11(const std::filesystem::path& path);

/// Reads a sample sidecar {sample_id, acquisition_day, image_path}; a relative
/// image_path resolves against the sidecar's directory.
M11Image load_sample(const std::filesystem::path& sidecar);

/// Writes a 16-bit single-channel TIFF; values are rounded and clamped to
/// [0, 65535].
void write_m11_tiff16(const std::filesystem::path& path, const Raster<float>& counts);

}  // namespace m11seg

#endif  // M11SEG_INGEST_HPP
