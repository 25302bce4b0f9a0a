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

/// @file synth.hpp
/// Procedural cervix-like sections for desk-scale verification: a bright
/// tissue ellipse, a dark irregular os blob near its center and zero, one or
/// two lateral vaginal-wall rings, under noise and an illumination gradient.

#ifndef M11SEG_SYNTH_HPP
#define M11SEG_SYNTH_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "m11seg/dataset.hpp"
#include "m11seg/ingest.hpp"
#include "m11seg/maskops.hpp"

namespace m11seg {

struct SynthOptions {
    Size size{640, 540};
    double noise_sigma = 0.035;  // in unit-intensity terms
    double counts_scale = 40000.0;
    double counts_offset = 1500.0;
};

struct SynthSample {
    M11Image image;  // raw camera-like counts, not normalized
    ClassMap labels;
    StructureMasks masks;
    SampleRecord record;
    int vaginal_rings = 0;
};

namespace detail {

struct Ellipse {
    double cx, cy, a, b, theta;

    // <= 1 inside
    double level(double x, double y) const {
        const double dx = x - cx, dy = y - cy;
        const double c = std::cos(theta), s = std::sin(theta);
        const double u = (dx * c + dy * s) / a;
        const double v = (-dx * s + dy * c) / b;
        return u * u + v * v;
    }
};

struct Blob {
    double cx, cy, radius;
    double amp1, phase1, amp2, phase2;

    bool contains(double x, double y) const {
        const double dx = x - cx, dy = y - cy;
        const double phi = std::atan2(dy, dx);
        const double r = radius * (1.0 + amp1 * std::sin(3.0 * phi + phase1) +
                                   amp2 * std::sin(5.0 * phi + phase2));
        return dx * dx + dy * dy <= r * r;
    }
};

struct Ring {
    double cx, cy, outer, inner;
    bool contains(double x, double y) const {
        const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        return d2 <= outer * outer && d2 >= inner * inner;
    }
};

template <typename Engine>
double uniform(Engine& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform_unit(rng);
}

template <typename Engine>
double gaussian(Engine& rng) {
    const double u1 = std::max(uniform_unit(rng), 1e-300);
    const double u2 = uniform_unit(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace detail

/// One sample; `index` drives the sample id and the round-robin acquisition day.
inline SynthSample synth_sample(std::size_t index, std::uint64_t seed, const SynthOptions& opt = {}) {
    using namespace detail;
    std::mt19937_64 rng(derive_seed(seed, 0x5EED, index));
    const double w = opt.size.width;
    const double h = opt.size.height;
    const double m = std::min(w, h);

    const Ellipse tissue{w / 2 + uniform(rng, -0.06, 0.06) * w, h / 2 + uniform(rng, -0.06, 0.06) * h,
                         uniform(rng, 0.26, 0.34) * w, uniform(rng, 0.28, 0.36) * h,
                         uniform(rng, -0.35, 0.35)};
    const Blob os{tissue.cx + uniform(rng, -0.05, 0.05) * tissue.a,
                  tissue.cy + uniform(rng, -0.05, 0.05) * tissue.b,
                  uniform(rng, 0.08, 0.13) * m,
                  uniform(rng, 0.05, 0.2),
                  uniform(rng, 0.0, 6.283),
                  uniform(rng, 0.0, 0.1),
                  uniform(rng, 0.0, 6.283)};

    const int rings = static_cast<int>(std::uint64_t(rng()) % 3);
    std::vector<Ring> ring_list;
    const double side0 = (std::uint64_t(rng()) & 1) ? 1.0 : -1.0;
    for (int k = 0; k < rings; ++k) {
        const double side = k == 0 ? side0 : -side0;
        const double outer = uniform(rng, 0.10, 0.14) * m;
        const double c = std::cos(tissue.theta), s = std::sin(tissue.theta);
        const double along = side * tissue.a * uniform(rng, 0.70, 0.80);
        const double across = uniform(rng, -0.15, 0.15) * tissue.b;
        ring_list.push_back({tissue.cx + along * c - across * s, tissue.cy + along * s + across * c,
                             outer, outer * uniform(rng, 0.50, 0.62)});
    }

    // Illumination: multiplicative linear gradient in a random direction.
    const double g_angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double g_strength = uniform(rng, 0.05, 0.15);
    const double tissue_level = uniform(rng, 0.58, 0.70);
    const double os_level = uniform(rng, 0.22, 0.32);
    const double ring_level = uniform(rng, 0.86, 0.95);
    const double bg_level = uniform(rng, 0.08, 0.15);
    const double texture_phase = uniform(rng, 0.0, 6.283);

    SynthSample out;
    const int W = opt.size.width, H = opt.size.height;
    out.masks = {BinaryMask(W, H, Structure::tissue), BinaryMask(W, H, Structure::os),
                 BinaryMask(W, H, Structure::vaginal_wall)};
    Raster<float> counts(W, H);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const double px = x + 0.5, py = y + 0.5;
            const bool in_tissue = tissue.level(px, py) <= 1.0;
            const bool in_os = in_tissue && os.contains(px, py);
            bool in_ring = false;
            for (const auto& r : ring_list) in_ring = in_ring || r.contains(px, py);

            double v = bg_level;
            if (in_tissue)
                v = tissue_level + 0.04 * std::sin(px * 0.05 + texture_phase) * std::cos(py * 0.043);
            if (in_os) v = os_level;
            if (in_ring) v = ring_level;

            const double t = ((px / w - 0.5) * std::cos(g_angle) + (py / h - 0.5) * std::sin(g_angle));
            v *= 1.0 + 2.0 * g_strength * t;
            v += opt.noise_sigma * gaussian(rng);
            counts(x, y) = static_cast<float>(opt.counts_offset + opt.counts_scale * std::clamp(v, 0.0, 1.2));

            out.masks.tissue.pixels(x, y) = in_tissue;
            out.masks.os.pixels(x, y) = in_os;
            out.masks.vaginal_wall.pixels(x, y) = in_ring;
        }
    }

    char id[32];
    std::snprintf(id, sizeof id, "synth_%03zu", index);
    out.image.pixels = std::move(counts);
    out.image.sample_id = id;
    out.image.acquisition_day = static_cast<int>(index % (kMaxAcquisitionDay + 1));
    out.image.original_size = out.image.size();
    out.labels = composite(out.masks);
    out.vaginal_rings = rings;
    out.record.sample_id = id;
    out.record.acquisition_day = out.image.acquisition_day;
    return out;
}

/// n procedurally generated samples with acquisition days assigned round-robin over 0..18.
inline std::vector<SynthSample> synth_dataset(std::size_t n, std::uint64_t seed,
                                              const SynthOptions& opt = {}) {
    if (n < 1) throw InvalidArgument("synth_dataset: n must be at least 1");
    std::vector<SynthSample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(synth_sample(i, seed, opt));
    return out;
}

/// Writes images/<id>.tif, masks/<id>_<structure>.png, labels/<id>.png,
/// samples/<id>.json and an unassigned manifest.json under `root`; record paths
/// are relative to `root`. Returns the manifest.
SplitManifest write_synth_dataset(const std::filesystem::path& root,
                                  std::vector<SynthSample>& samples, std::uint64_t seed);

}  // namespace m11seg

#endif  // M11SEG_SYNTH_HPP
