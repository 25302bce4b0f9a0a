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

/// @file evaluate.hpp
/// Segmentation metrics (pixel accuracy, per-class Dice and IoU), sample-level
/// aggregation and overlay rendering.

#ifndef M11SEG_EVALUATE_HPP
#define M11SEG_EVALUATE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "m11seg/ingest.hpp"
#include "m11seg/png_io.hpp"
#include "m11seg/raster.hpp"

namespace m11seg {

/// How a class absent from both prediction and ground truth is scored.
enum class EmptyClassPolicy {
    score_one,  // correct absence counts as a perfect 1.0
    exclude,    // drop the class from means (audit mode)
};

namespace detail {

inline void check_same_size(const ClassMap& a, const ClassMap& b, const char* what) {
    if (a.size() != b.size()) throw DimensionMismatch(std::string(what) + ": maps differ in size");
}

inline void check_class(int class_id) {
    if (class_id < 0 || class_id >= kNumClasses)
        throw InvalidArgument("class id " + std::to_string(class_id) + " outside {0..3}");
}

struct Overlap {
    std::size_t pred = 0;
    std::size_t gt = 0;
    std::size_t both = 0;
};

inline Overlap overlap(const ClassMap& pred, const ClassMap& gt, int class_id) {
    Overlap o;
    const auto p = pred.labels.pixels();
    const auto g = gt.labels.pixels();
    for (std::size_t i = 0; i < p.size(); ++i) {
        const bool in_p = p[i] == class_id;
        const bool in_g = g[i] == class_id;
        o.pred += in_p;
        o.gt += in_g;
        o.both += in_p && in_g;
    }
    return o;
}

}  // namespace detail

inline double pixel_accuracy(const ClassMap& pred, const ClassMap& gt) {
    detail::check_same_size(pred, gt, "pixel_accuracy");
    const auto p = pred.labels.pixels();
    const auto g = gt.labels.pixels();
    if (p.empty()) throw InvalidArgument("pixel_accuracy: empty maps");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < p.size(); ++i) hits += p[i] == g[i];
    return double(hits) / double(p.size());
}

/// 2|P n G| / (|P| + |G|); 1.0 when the class is absent from both maps.
inline double dsc(const ClassMap& pred, const ClassMap& gt, int class_id) {
    detail::check_same_size(pred, gt, "dsc");
    detail::check_class(class_id);
    const auto o = detail::overlap(pred, gt, class_id);
    if (o.pred + o.gt == 0) return 1.0;
    return 2.0 * double(o.both) / double(o.pred + o.gt);
}

/// |P n G| / |P u G|; 1.0 when the class is absent from both maps.
inline double iou(const ClassMap& pred, const ClassMap& gt, int class_id) {
    detail::check_same_size(pred, gt, "iou");
    detail::check_class(class_id);
    const auto o = detail::overlap(pred, gt, class_id);
    const std::size_t uni = o.pred + o.gt - o.both;
    if (uni == 0) return 1.0;
    return double(o.both) / double(uni);
}

/// Arithmetic mean over tissue, os and vaginal wall.
inline double mean_tissue_dsc(const std::array<std::optional<double>, kNumClasses>& per_class) {
    double sum = 0.0;
    for (int c = 1; c < kNumClasses; ++c) {
        if (!per_class[c])
            throw InvalidArgument("mean_tissue_dsc: missing DSC for class '" +
                                  std::string(kClassNames[c]) + "'");
        sum += *per_class[c];
    }
    return sum / 3.0;
}

inline double mean_tissue_dsc(double tissue, double os, double vaginal) {
    return mean_tissue_dsc({std::nullopt, tissue, os, vaginal});
}

struct SampleMetrics {
    std::string sample_id;
    double pixel_accuracy = 0.0;
    std::array<double, kNumClasses> dsc{};
    std::array<double, kNumClasses> iou{};
    /// Class occurs in prediction or ground truth.
    std::array<bool, kNumClasses> present{};
    double mean_tissue_dsc = 0.0;
};

inline SampleMetrics compute_metrics(const ClassMap& pred, const ClassMap& gt,
                                     std::string sample_id = {}) {
    detail::check_same_size(pred, gt, "compute_metrics");
    SampleMetrics m;
    m.sample_id = std::move(sample_id);
    m.pixel_accuracy = pixel_accuracy(pred, gt);
    for (int c = 0; c < kNumClasses; ++c) {
        const auto o = detail::overlap(pred, gt, c);
        m.present[c] = o.pred + o.gt > 0;
        m.dsc[c] = m.present[c] ? 2.0 * double(o.both) / double(o.pred + o.gt) : 1.0;
        m.iou[c] = m.present[c] ? double(o.both) / double(o.pred + o.gt - o.both) : 1.0;
    }
    m.mean_tissue_dsc = mean_tissue_dsc(m.dsc[1], m.dsc[2], m.dsc[3]);
    return m;
}

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation (n - 1); 0 for a single value
    std::size_t n = 0;
};

inline MeanStd mean_std(const std::vector<double>& xs) {
    MeanStd out;
    out.n = xs.size();
    if (xs.empty()) return out;
    double sum = 0.0;
    for (double x : xs) sum += x;
    out.mean = sum / double(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - out.mean) * (x - out.mean);
        out.std = std::sqrt(ss / double(xs.size() - 1));
    }
    return out;
}

struct EvalReport {
    std::vector<SampleMetrics> per_sample;
    MeanStd pixel_accuracy;
    MeanStd mean_tissue_dsc;
    std::array<MeanStd, kNumClasses> dsc{};
    std::array<MeanStd, kNumClasses> iou{};
    EmptyClassPolicy policy = EmptyClassPolicy::score_one;
    std::uint64_t seed = 0;
};

/// Per-metric mean and sample std over samples (no pixel pooling).
inline EvalReport aggregate(const std::vector<SampleMetrics>& per_sample,
                            EmptyClassPolicy policy = EmptyClassPolicy::score_one) {
    if (per_sample.empty()) throw InvalidArgument("aggregate: no samples");
    EvalReport r;
    r.per_sample = per_sample;
    r.policy = policy;

    std::vector<double> acc, mtd;
    std::array<std::vector<double>, kNumClasses> d, j;
    for (const auto& s : per_sample) {
        acc.push_back(s.pixel_accuracy);
        double sum = 0.0;
        int count = 0;
        for (int c = 0; c < kNumClasses; ++c) {
            if (policy == EmptyClassPolicy::exclude && !s.present[c]) continue;
            d[c].push_back(s.dsc[c]);
            j[c].push_back(s.iou[c]);
            if (c > 0) {
                sum += s.dsc[c];
                ++count;
            }
        }
        if (policy == EmptyClassPolicy::score_one) mtd.push_back(s.mean_tissue_dsc);
        else if (count > 0) mtd.push_back(sum / count);
    }
    r.pixel_accuracy = mean_std(acc);
    r.mean_tissue_dsc = mean_std(mtd);
    for (int c = 0; c < kNumClasses; ++c) {
        r.dsc[c] = mean_std(d[c]);
        r.iou[c] = mean_std(j[c]);
    }
    return r;
}

inline nlohmann::json report_to_json(const EvalReport& r) {
    auto ms = [](const MeanStd& m) { return nlohmann::json{{"mean", m.mean}, {"std", m.std}, {"n", m.n}}; };
    nlohmann::json j;
    j["seed"] = r.seed;
    j["empty_class_policy"] = r.policy == EmptyClassPolicy::score_one ? "score_one" : "exclude";
    j["num_samples"] = r.per_sample.size();
    nlohmann::json agg;
    agg["pixel_accuracy"] = ms(r.pixel_accuracy);
    agg["mean_tissue_dsc"] = ms(r.mean_tissue_dsc);
    for (int c = 0; c < kNumClasses; ++c) {
        agg["dsc"][std::string(kClassNames[c])] = ms(r.dsc[c]);
        agg["iou"][std::string(kClassNames[c])] = ms(r.iou[c]);
    }
    j["aggregate"] = agg;
    j["per_sample"] = nlohmann::json::array();
    for (const auto& s : r.per_sample) {
        nlohmann::json e{{"sample_id", s.sample_id},
                         {"pixel_accuracy", s.pixel_accuracy},
                         {"mean_tissue_dsc", s.mean_tissue_dsc}};
        for (int c = 0; c < kNumClasses; ++c) {
            const std::string name(kClassNames[c]);
            e["dsc"][name] = s.dsc[c];
            e["iou"][name] = s.iou[c];
            e["present"][name] = s.present[c];
        }
        j["per_sample"].push_back(std::move(e));
    }
    return j;
}

/// Text table: Metric | Dice (%) | IoU (%), mean +/- std.
inline std::string render_report_table(const EvalReport& r) {
    auto cell = [](const MeanStd& m) {
        std::ostringstream os;
        os << std::fixed << std::setprecision(1) << 100.0 * m.mean << " +/- " << 100.0 * m.std;
        return os.str();
    };
    std::ostringstream out;
    auto row = [&](const std::string& a, const std::string& b, const std::string& c) {
        out << std::left << std::setw(18) << a << std::setw(18) << b << c << '\n';
    };
    out << "Test performance over " << r.per_sample.size()
        << " samples (mean +/- std, in %)\n";
    row("Metric", "Dice (%)", "IoU (%)");
    out << std::string(52, '-') << '\n';
    row("Pixel Accuracy", "-", cell(r.pixel_accuracy));
    row("Mean tissue DSC", cell(r.mean_tissue_dsc), "-");
    out << std::string(52, '-') << '\n';
    const std::array<std::string, kNumClasses> labels = {"Background", "Tissue", "OS", "Vaginal"};
    for (int c = 0; c < kNumClasses; ++c) row(labels[c], cell(r.dsc[c]), cell(r.iou[c]));
    return out.str();
}

inline constexpr double kOverlayAlpha = 0.4;

/// Grayscale M11 with translucent class colors; background stays uncolored.
/// The image is expected in [0, 1].
inline RgbImage render_overlay(const M11Image& img, const ClassMap& map,
                               double alpha = kOverlayAlpha) {
    if (img.size() != map.size()) throw DimensionMismatch("render_overlay: image and map differ in size");
    RgbImage out{img.width(), img.height(), std::vector<Rgb>(img.pixels.pixel_count())};
    const auto px = img.pixels.pixels();
    const auto lab = map.labels.pixels();
    auto blend = [alpha](std::uint8_t g, std::uint8_t c) {
        return static_cast<std::uint8_t>(std::lround((1.0 - alpha) * g + alpha * c));
    };
    for (std::size_t i = 0; i < px.size(); ++i) {
        const auto g = static_cast<std::uint8_t>(std::lround(std::clamp(double(px[i]), 0.0, 1.0) * 255.0));
        const int c = lab[i];
        if (c >= kNumClasses) throw InvalidLabel("render_overlay: label outside {0..3}");
        if (c == 0) {
            out.pixels[i] = {g, g, g};
        } else {
            const Rgb& col = kClassPalette[c];
            out.pixels[i] = {blend(g, col.r), blend(g, col.g), blend(g, col.b)};
        }
    }
    return out;
}

}  // namespace m11seg

#endif  // M11SEG_EVALUATE_HPP
