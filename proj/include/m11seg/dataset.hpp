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

/// @file dataset.hpp
/// Sample registry, acquisition-day stratified splitting, paired augmentation
/// and conversion to network-ready examples.

#ifndef M11SEG_DATASET_HPP
#define M11SEG_DATASET_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "m11seg/ingest.hpp"
#include "m11seg/maskops.hpp"

namespace m11seg {

enum class Split : std::uint8_t { train = 0, val = 1, test = 2, unassigned = 3 };

inline std::string_view split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
        default: return "unassigned";
    }
}

inline Split parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    if (s == "unassigned") return Split::unassigned;
    throw InvalidArgument("unknown split '" + std::string(s) + "'");
}

struct SampleRecord {
    std::string sample_id;
    int acquisition_day = 0;
    std::string image_path;
    std::map<std::string, std::string> mask_paths;  // keyed by structure name
    std::string classmap_path;                      // composited labels, optional
    Split split = Split::unassigned;

    friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

using SplitRatios = std::array<double, 3>;

struct SplitManifest {
    std::vector<SampleRecord> records;
    SplitRatios ratios{0.70, 0.15, 0.15};
    std::uint64_t seed = 0;
    std::vector<std::string> warnings;

    std::vector<const SampleRecord*> in_split(Split s) const {
        std::vector<const SampleRecord*> out;
        for (const auto& r : records)
            if (r.split == s) out.push_back(&r);
        return out;
    }
    std::array<std::size_t, 3> counts() const {
        std::array<std::size_t, 3> c{};
        for (const auto& r : records)
            if (r.split != Split::unassigned) ++c[static_cast<std::size_t>(r.split)];
        return c;
    }
    friend bool operator==(const SplitManifest& a, const SplitManifest& b) {
        return a.records == b.records && a.ratios == b.ratios && a.seed == b.seed;
    }
};

// ---------------------------------------------------------------------------
// Seeding

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b = 0) {
    return splitmix64(splitmix64(splitmix64(root) ^ a) ^ (b * 0xD6E8FEB86659FD93ull));
}

inline std::uint64_t hash_string(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

/// Uniform double in [0, 1) from the top 53 bits.
template <typename Engine>
double uniform_unit(Engine& rng) {
    return double(std::uint64_t(rng()) >> 11) * 0x1.0p-53;
}

template <typename Engine, typename T>
void shuffle_deterministic(std::vector<T>& v, Engine& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(std::uint64_t(rng()) % i);
        std::swap(v[i - 1], v[j]);
    }
}

// ---------------------------------------------------------------------------
// Stratified split

namespace detail {

// Largest-remainder apportionment of `total` by `ratios`; ties go to the
// lower split index (train first).
inline std::array<int, 3> apportion(int total, const SplitRatios& ratios) {
    std::array<int, 3> out{};
    std::array<double, 3> frac{};
    int assigned = 0;
    for (int i = 0; i < 3; ++i) {
        const double q = std::round(total * ratios[i] * 1e9) / 1e9;
        out[i] = static_cast<int>(std::floor(q));
        frac[i] = q - out[i];
        assigned += out[i];
    }
    std::array<int, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return frac[a] > frac[b]; });
    for (int k = 0; assigned < total; k = (k + 1) % 3, ++assigned) ++out[order[k]];
    return out;
}

// Unit-capacity bipartite flow (days -> splits) distributing per-day leftover
// samples so every split reaches its global target.
class LeftoverFlow {
public:
    LeftoverFlow(std::size_t days) : days_(days), cap_(node_count(), std::vector<int>(node_count(), 0)) {}

    void day_supply(std::size_t d, int units) { cap_[source()][day(d)] = units; }
    void split_demand(int s, int units) { cap_[split(s)][sink()] = std::max(0, units); }
    void allow(std::size_t d, int s) { cap_[day(d)][split(s)] = 1; }
    void prefer(std::size_t d, std::array<int, 3> order) { pref_.emplace(d, order); }

    int run() {
        int flow = 0;
        for (;;) {
            std::vector<char> seen(node_count(), 0);
            if (!augment(source(), seen)) break;
            ++flow;
        }
        return flow;
    }

    /// Units routed from day d to split s.
    int routed(std::size_t d, int s) const { return cap_[split(s)][day(d)]; }

private:
    std::size_t node_count() const { return days_ + 5; }
    std::size_t source() const { return 0; }
    std::size_t sink() const { return 1; }
    std::size_t day(std::size_t d) const { return 2 + d; }
    std::size_t split(int s) const { return 2 + days_ + std::size_t(s); }

    bool augment(std::size_t u, std::vector<char>& seen) {
        if (u == sink()) return true;
        seen[u] = 1;
        for (std::size_t v : neighbors(u)) {
            if (seen[v] || cap_[u][v] <= 0) continue;
            if (augment(v, seen)) {
                --cap_[u][v];
                ++cap_[v][u];
                return true;
            }
        }
        return false;
    }

    std::vector<std::size_t> neighbors(std::size_t u) const {
        std::vector<std::size_t> out;
        if (u >= 2 && u < 2 + days_) {
            const auto it = pref_.find(u - 2);
            for (int s : it != pref_.end() ? it->second : std::array<int, 3>{0, 1, 2})
                out.push_back(split(s));
            out.push_back(source());
        } else {
            out.push_back(sink());
            for (std::size_t d = 0; d < days_; ++d) out.push_back(day(d));
            for (int s = 0; s < 3; ++s) out.push_back(split(s));
            out.push_back(source());
        }
        return out;
    }

    std::size_t days_;
    std::vector<std::vector<int>> cap_;
    std::map<std::size_t, std::array<int, 3>> pref_;
};

}  // namespace detail

/// Partitions records into train/val/test, stratified by acquisition day.
///
/// Global split sizes follow largest-remainder apportionment of the record
/// count. Within each day the count for each split is the floor or ceiling of
/// its quota (day size times ratio), so each split's share of a day deviates
/// from its ratio by less than one sample; the per-day roundings are chosen so
/// the global sizes are met exactly. Records inside a day are shuffled by seed
/// before being dealt out in train, val, test order.
inline SplitManifest stratified_split(std::vector<SampleRecord> records, const SplitRatios& ratios,
                                      std::uint64_t seed) {
    if (records.empty()) throw InvalidArgument("stratified_split: no records");
    double sum = 0.0;
    for (double r : ratios) {
        if (!(r > 0.0)) throw InvalidArgument("stratified_split: ratios must be positive");
        sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw InvalidArgument("stratified_split: ratios must sum to 1");
    {
        std::set<std::string> ids;
        for (const auto& r : records)
            if (!ids.insert(r.sample_id).second)
                throw InvalidArgument("duplicate sample_id '" + r.sample_id + "'");
    }

    SplitManifest manifest;
    manifest.ratios = ratios;
    manifest.seed = seed;

    std::map<int, std::vector<std::size_t>> by_day;
    for (std::size_t i = 0; i < records.size(); ++i) by_day[records[i].acquisition_day].push_back(i);

    std::vector<int> day_keys;
    std::vector<std::array<int, 3>> counts;
    std::vector<std::array<double, 3>> fracs;
    std::array<int, 3> floor_totals{};
    for (const auto& [day, idx] : by_day) {
        day_keys.push_back(day);
        std::array<int, 3> c{};
        std::array<double, 3> f{};
        for (int s = 0; s < 3; ++s) {
            const double q = std::round(double(idx.size()) * ratios[s] * 1e9) / 1e9;
            c[s] = static_cast<int>(std::floor(q));
            f[s] = q - c[s];
            floor_totals[s] += c[s];
        }
        counts.push_back(c);
        fracs.push_back(f);
    }

    const auto targets = detail::apportion(static_cast<int>(records.size()), ratios);
    detail::LeftoverFlow flow(day_keys.size());
    int supply = 0;
    for (std::size_t d = 0; d < day_keys.size(); ++d) {
        const int group = static_cast<int>(by_day[day_keys[d]].size());
        const int leftover = group - counts[d][0] - counts[d][1] - counts[d][2];
        supply += leftover;
        flow.day_supply(d, leftover);
        std::array<int, 3> order{0, 1, 2};
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return fracs[d][a] > fracs[d][b]; });
        flow.prefer(d, order);
        for (int s = 0; s < 3; ++s)
            if (fracs[d][s] > 1e-9) flow.allow(d, s);
        if (group == 1)
            manifest.warnings.push_back("day " + std::to_string(day_keys[d]) +
                                        " has a single record; it cannot be spread across splits");
    }
    for (int s = 0; s < 3; ++s) flow.split_demand(s, targets[s] - floor_totals[s]);
    const int routed = flow.run();

    for (std::size_t d = 0; d < day_keys.size(); ++d)
        for (int s = 0; s < 3; ++s) counts[d][s] += flow.routed(d, s);
    if (routed < supply) {
        manifest.warnings.push_back("split sizes deviate from the global targets");
        for (std::size_t d = 0; d < day_keys.size(); ++d) {
            const int group = static_cast<int>(by_day[day_keys[d]].size());
            for (int s = 0; s < 3 && counts[d][0] + counts[d][1] + counts[d][2] < group; ++s)
                if (fracs[d][s] > 1e-9 && flow.routed(d, s) == 0) ++counts[d][s];
        }
    }

    for (std::size_t d = 0; d < day_keys.size(); ++d) {
        auto idx = by_day[day_keys[d]];
        std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(day_keys[d])));
        shuffle_deterministic(idx, rng);
        std::size_t k = 0;
        for (int s = 0; s < 3; ++s)
            for (int n = 0; n < counts[d][s]; ++n) records[idx[k++]].split = static_cast<Split>(s);
        for (; k < idx.size(); ++k) records[idx[k]].split = Split::train;
    }
    manifest.records = std::move(records);
    return manifest;
}

// ---------------------------------------------------------------------------
// Network-ready examples

inline constexpr std::array<float, 3> kImageNetMean = {0.485f, 0.456f, 0.406f};
inline constexpr std::array<float, 3> kImageNetStd = {0.229f, 0.224f, 0.225f};
inline constexpr Size kNetworkInput{512, 512};

/// One sample at network resolution. `intensity` is the single-channel raw
/// [0, 1] raster; `input` is its three-channel replication standardized with
/// ImageNet statistics, stored planar (CHW).
struct TrainingExample {
    Raster<float> intensity;
    std::vector<float> input;
    ClassMap target;
    std::string sample_id;

    int width() const noexcept { return intensity.width(); }
    int height() const noexcept { return intensity.height(); }
    float channel(int c, int x, int y) const {
        return input[(std::size_t(c) * std::size_t(height()) + std::size_t(y)) * std::size_t(width()) +
                     std::size_t(x)];
    }
};

/// Rebuilds `input` from `intensity`.
inline void standardize(TrainingExample& ex) {
    const std::size_t plane = ex.intensity.pixel_count();
    ex.input.resize(plane * 3);
    const auto src = ex.intensity.pixels();
    for (std::size_t c = 0; c < 3; ++c) {
        float* dst = ex.input.data() + c * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] = (src[i] - kImageNetMean[c]) / kImageNetStd[c];
    }
}

/// Resize (bilinear image, nearest labels), replicate to three channels and
/// apply ImageNet statistics. The image must already be normalized to [0, 1].
inline TrainingExample to_training_example(const M11Image& img, const ClassMap& map,
                                           Size input_size = kNetworkInput) {
    if (img.size() != map.size())
        throw DimensionMismatch("to_training_example: image " + std::to_string(img.width()) + "x" +
                                std::to_string(img.height()) + " vs map " +
                                std::to_string(map.width()) + "x" + std::to_string(map.height()));
    TrainingExample ex;
    ex.intensity = resize_bilinear(img.pixels, input_size);
    for (auto& v : ex.intensity.pixels()) v = std::clamp(v, 0.0f, 1.0f);
    ex.target = resize_mask(map, input_size);
    ex.sample_id = img.sample_id;
    standardize(ex);
    return ex;
}

// ---------------------------------------------------------------------------
// Augmentation

struct AugmentDraws {
    bool hflip = false;
    bool vflip = false;
    int quarter_turns = 0;  // clockwise, in {0, 1, 2, 3}
    float jitter = 1.0f;    // multiplicative, in [0.85, 1.15]

    static AugmentDraws identity() { return {}; }
};

inline constexpr float kJitterSpan = 0.15f;

template <typename Engine>
AugmentDraws draw_augment(Engine& rng) {
    const std::uint64_t bits = rng();
    AugmentDraws d;
    d.hflip = (bits & 1u) != 0;
    d.vflip = (bits & 2u) != 0;
    d.quarter_turns = static_cast<int>((bits >> 2) & 3u);
    d.jitter = static_cast<float>(1.0 - kJitterSpan + 2.0 * kJitterSpan * uniform_unit(rng));
    return d;
}

namespace detail {

template <typename T>
Raster<T> flip(const Raster<T>& src, bool horizontal) {
    Raster<T> out(src.width(), src.height());
    for (int y = 0; y < src.height(); ++y)
        for (int x = 0; x < src.width(); ++x)
            out(x, y) = horizontal ? src(src.width() - 1 - x, y) : src(x, src.height() - 1 - y);
    return out;
}

template <typename T>
Raster<T> rotate_cw(const Raster<T>& src) {
    Raster<T> out(src.height(), src.width());
    for (int y = 0; y < src.height(); ++y)
        for (int x = 0; x < src.width(); ++x) out(src.height() - 1 - y, x) = src(x, y);
    return out;
}

template <typename T>
Raster<T> apply_geometry(Raster<T> r, const AugmentDraws& d) {
    if (d.hflip) r = flip(r, true);
    if (d.vflip) r = flip(r, false);
    for (int k = 0; k < (d.quarter_turns & 3); ++k) r = rotate_cw(r);
    return r;
}

}  // namespace detail

/// Jitter (on raw intensity, clamped to [0, 1]) then flips then rotation;
/// geometry is applied identically to input and target.
inline TrainingExample augment(const TrainingExample& ex, const AugmentDraws& d) {
    if (ex.intensity.size() != ex.target.size())
        throw DimensionMismatch("augment: input and target differ in size");
    TrainingExample out;
    out.sample_id = ex.sample_id;
    out.intensity = ex.intensity;
    if (d.jitter != 1.0f)
        for (auto& v : out.intensity.pixels()) v = std::clamp(v * d.jitter, 0.0f, 1.0f);
    out.intensity = detail::apply_geometry(std::move(out.intensity), d);
    out.target = ClassMap(detail::apply_geometry(ex.target.labels, d));
    standardize(out);
    return out;
}

template <std::uniform_random_bit_generator Engine>
TrainingExample augment(const TrainingExample& ex, Engine& rng) {
    return augment(ex, draw_augment(rng));
}

// ---------------------------------------------------------------------------
// Manifest JSON

inline void to_json(nlohmann::json& j, const SampleRecord& r) {
    j = nlohmann::json{{"sample_id", r.sample_id},
                       {"acquisition_day", r.acquisition_day},
                       {"image_path", r.image_path},
                       {"mask_paths", r.mask_paths},
                       {"split", std::string(split_name(r.split))}};
    if (!r.classmap_path.empty()) j["classmap_path"] = r.classmap_path;
}

inline void from_json(const nlohmann::json& j, SampleRecord& r) {
    r.sample_id = j.at("sample_id").get<std::string>();
    r.acquisition_day = j.at("acquisition_day").get<int>();
    r.image_path = j.value("image_path", std::string{});
    r.mask_paths = j.value("mask_paths", std::map<std::string, std::string>{});
    r.classmap_path = j.value("classmap_path", std::string{});
    r.split = parse_split(j.value("split", std::string("unassigned")));
}

inline nlohmann::json manifest_to_json(const SplitManifest& m) {
    nlohmann::json j;
    j["seed"] = m.seed;
    j["ratios"] = m.ratios;
    j["records"] = m.records;
    if (!m.warnings.empty()) j["warnings"] = m.warnings;
    return j;
}

/// Accepts either {records, ratios, seed} or a bare list of records.
inline SplitManifest manifest_from_json(const nlohmann::json& j) {
    SplitManifest m;
    if (j.is_array()) {
        m.records = j.get<std::vector<SampleRecord>>();
        return m;
    }
    m.records = j.at("records").get<std::vector<SampleRecord>>();
    if (j.contains("ratios")) m.ratios = j.at("ratios").get<SplitRatios>();
    m.seed = j.value("seed", std::uint64_t{0});
    m.warnings = j.value("warnings", std::vector<std::string>{});
    return m;
}

inline SplitManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FileNotFound("no manifest at '" + path.string() + "'");
    try {
        return manifest_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw CorruptFile("manifest '" + path.string() + "': " + e.what());
    }
}

}  // namespace m11seg

#endif  // M11SEG_DATASET_HPP
