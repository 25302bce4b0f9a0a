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

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero
// when any criterion fails.
//
//   acceptance [--group fast|learning|all] [--pretrained-weights FILE]
//
// The learning group needs an ImageNet ResNet-34 encoder archive (see
// tools/convert_resnet34_weights.py), passed by flag or M11SEG_RESNET34_WEIGHTS.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "m11seg/evaluate.hpp"
#include "m11seg/loss.hpp"
#include "m11seg/maskops.hpp"
#include "m11seg/model.hpp"
#include "m11seg/png_io.hpp"
#include "m11seg/synth.hpp"
#include "m11seg/train.hpp"

namespace fs = std::filesystem;
using namespace m11seg;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os << std::setprecision(prec) << v;
    return os.str();
}

ClassMap random_map(std::mt19937_64& rng, int w, int h) {
    std::uniform_int_distribution<int> d(0, 3);
    ClassMap m(w, h);
    for (auto& v : m.labels.pixels()) v = std::uint8_t(d(rng));
    return m;
}

// ---------------------------------------------------------------------------

Outcome reported_dsc() {
    const double v = mean_tissue_dsc(88.63, 84.85, 69.41);
    return {std::abs(v - 80.96) <= 0.05,
            "mean_tissue_dsc(88.63, 84.85, 69.41) = " + fmt(v, 6) + " (target 80.96 +/- 0.05)"};
}

Outcome split_reproduction() {
    std::vector<SampleRecord> recs;
    for (int i = 0; i < 70; ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "synth_%03d", i);
        recs.push_back({id, i % 19, "", {}, "", Split::unassigned});
    }
    const SplitRatios ratios{0.70, 0.15, 0.15};
    const SplitManifest m = stratified_split(recs, ratios, 42);
    const auto c = m.counts();
    std::set<std::string> ids;
    bool exhaustive = m.records.size() == 70;
    for (const auto& r : m.records) {
        exhaustive = exhaustive && r.split != Split::unassigned;
        ids.insert(r.sample_id);
    }
    const bool disjoint = ids.size() == 70 && c[0] + c[1] + c[2] == 70;
    std::map<int, std::array<int, 3>> per_day;
    for (const auto& r : m.records) ++per_day[r.acquisition_day][int(r.split)];
    double worst = 0.0;
    for (const auto& [day, k] : per_day) {
        const int n = k[0] + k[1] + k[2];
        for (int s = 0; s < 3; ++s) worst = std::max(worst, std::abs(k[s] - n * ratios[s]));
    }
    const bool sizes = c[0] == 49 && ((c[1] == 10 && c[2] == 11) || (c[1] == 11 && c[2] == 10));
    return {sizes && disjoint && exhaustive && worst < 1.0,
            "train/val/test = " + std::to_string(c[0]) + "/" + std::to_string(c[1]) + "/" + std::to_string(c[2]) +
                ", disjoint=" + (disjoint ? "yes" : "no") + ", exhaustive=" + (exhaustive ? "yes" : "no") +
                ", max per-day deviation " + fmt(worst, 3) + " samples"};
}

std::uint8_t priority(bool t, bool o, bool v) { return v ? 3 : o ? 2 : t ? 1 : 0; }

Outcome compositing_oracle() {
    int mismatches = 0;
    for (int bits = 0; bits < 8; ++bits) {
        BinaryMask t(1, 1, Structure::tissue), o(1, 1, Structure::os), v(1, 1, Structure::vaginal_wall);
        t.pixels(0, 0) = bits & 1;
        o.pixels(0, 0) = (bits >> 1) & 1;
        v.pixels(0, 0) = (bits >> 2) & 1;
        mismatches += composite(t, o, v).labels(0, 0) != priority(bits & 1, bits & 2, bits & 4);
    }
    std::mt19937_64 rng(1);
    std::bernoulli_distribution coin(0.5);
    for (int trial = 0; trial < 1000; ++trial) {
        BinaryMask t(16, 16, Structure::tissue), o(16, 16, Structure::os), v(16, 16, Structure::vaginal_wall);
        for (auto* m : {&t, &o, &v})
            for (auto& p : m->pixels.pixels()) p = coin(rng);
        const ClassMap c = composite(t, o, v);
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x)
                mismatches += c.labels(x, y) != priority(t.pixels(x, y), o.pixels(x, y), v.pixels(x, y));
    }
    return {mismatches == 0, "8 combinations + 1000 random 16x16 triples, " + std::to_string(mismatches) +
                                 " pixel mismatches"};
}

Outcome metric_identities() {
    std::mt19937_64 rng(2);
    double worst = 0.0;
    bool symmetric = true;
    for (int trial = 0; trial < 1000; ++trial) {
        const ClassMap a = random_map(rng, 32, 32), b = random_map(rng, 32, 32);
        for (int c = 0; c < kNumClasses; ++c) {
            const double d = dsc(a, b, c);
            worst = std::max(worst, std::abs(iou(a, b, c) - d / (2.0 - d)));
            symmetric = symmetric && d == dsc(b, a, c);
        }
    }
    const ClassMap empty(32, 32);
    bool both_empty = true;
    for (int c = 1; c < kNumClasses; ++c)
        both_empty = both_empty && dsc(empty, empty, c) == 1.0 && iou(empty, empty, c) == 1.0;
    return {worst <= 1e-12 && symmetric && both_empty,
            "max |IoU - DSC/(2-DSC)| = " + fmt(worst, 3) + " (tol 1e-12), symmetric=" + (symmetric ? "yes" : "no") +
                ", both-empty=1.0: " + (both_empty ? "yes" : "no")};
}

double dice_direct(const std::vector<double>& l, const std::vector<int>& t, int C, int H, int W) {
    std::vector<double> inter(C), ps(C), gs(C);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double mx = -1e300, z = 0.0;
            for (int c = 0; c < C; ++c) mx = std::max(mx, l[(c * H + y) * W + x]);
            for (int c = 0; c < C; ++c) z += std::exp(l[(c * H + y) * W + x] - mx);
            for (int c = 0; c < C; ++c) {
                const double p = std::exp(l[(c * H + y) * W + x] - mx) / z;
                ps[c] += p;
                if (t[y * W + x] == c) gs[c] += 1.0, inter[c] += p;
            }
        }
    double s = 0.0;
    for (int c = 0; c < C; ++c) s += (2.0 * inter[c] + 1.0) / (ps[c] + gs[c] + 1.0);
    return 1.0 - s / C;
}

Outcome loss_analytics() {
    torch::manual_seed(3);
    const auto target = torch::randint(0, 4, {2, 32, 32}, torch::kLong);
    const double ce = ce_loss(torch::zeros({2, 4, 32, 32}), target).item<double>();
    const auto hard = torch::one_hot(target, 4).permute({0, 3, 1, 2}).to(torch::kFloat) * 50.0;
    const double saturated = total_loss(hard, target).item<double>();

    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0.0, 1.5);
    std::uniform_int_distribution<int> cls(0, 3);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> l(4 * 4 * 4);
        for (auto& v : l) v = n(rng);
        std::vector<int> t(16);
        for (auto& v : t) v = cls(rng);
        auto x = torch::from_blob(l.data(), {1, 4, 4, 4}, torch::kDouble).clone().requires_grad_(true);
        std::vector<std::int64_t> t64(t.begin(), t.end());
        const auto tt = torch::from_blob(t64.data(), {1, 4, 4}, torch::kLong).clone();
        dice_loss(x, tt).backward();
        const auto g = x.grad().contiguous();
        for (std::size_t i = 0; i < l.size(); ++i) {
            auto p = l, m = l;
            p[i] += 1e-5;
            m[i] -= 1e-5;
            const double fd = (dice_direct(p, t, 4, 4, 4) - dice_direct(m, t, 4, 4, 4)) / 2e-5;
            const double an = g.data_ptr<double>()[i];
            worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}));
        }
    }
    const bool ok = std::abs(ce - std::log(4.0)) <= 1e-6 && saturated <= 1e-3 && worst <= 1e-4;
    return {ok, "uniform CE = " + fmt(ce, 9) + " (ln 4 = " + fmt(std::log(4.0), 9) + "), saturated total = " +
                    fmt(saturated, 3) + " (<= 1e-3), dice grad max rel err = " + fmt(worst, 3) + " (<= 1e-4)"};
}

Outcome architecture() {
    UNet model = build(ModelSpec{}, 5);
    model->eval();
    torch::NoGradGuard ng;
    FeaturePyramid fp;
    const auto out = model->forward(torch::randn({1, 3, 512, 512}), &fp);
    const bool shape = out.sizes() == std::vector<std::int64_t>{1, 4, 512, 512};
    const bool finite = torch::isfinite(out).all().item<bool>();
    const bool bottleneck = fp.bottleneck().height == 16 && fp.bottleneck().width == 16;
    const auto ch = encoder_stage_channels(model);
    const bool channels = ch == std::array<std::int64_t, 5>{64, 64, 128, 256, 512};
    bool stages = true;
    for (std::size_t i = 0; i < fp.stages.size(); ++i) stages = stages && fp.stages[i].channels == ch[i];
    std::ostringstream os;
    os << "output " << out.sizes() << (finite ? " finite" : " NON-FINITE") << ", bottleneck "
       << fp.bottleneck().height << "x" << fp.bottleneck().width << ", encoder channels [" << ch[0] << ", " << ch[1]
       << ", " << ch[2] << ", " << ch[3] << ", " << ch[4] << "]";
    return {shape && finite && bottleneck && channels && stages, os.str()};
}

Outcome round_trips() {
    const fs::path dir = fs::temp_directory_path() / ("m11seg_accept_" + std::to_string(std::random_device{}()));
    fs::create_directories(dir);
    std::mt19937_64 rng(6);
    std::uniform_int_distribution<int> side(1, 128);
    int bad = 0;
    for (int i = 0; i < 100; ++i) {
        const ClassMap m = random_map(rng, side(rng), side(rng));
        encode_classmap(m, dir / "m.png");
        bad += !(decode_classmap(dir / "m.png") == m);
    }
    fs::remove_all(dir);

    double min_self = 1.0;
    int hist_changes = 0;
    for (int i = 0; i < 100; ++i) {
        M11Image img;
        img.pixels = Raster<float>(24, 16);
        std::uniform_real_distribution<float> u(0.0f, 1.0f);
        for (auto& v : img.pixels.pixels()) v = u(rng);
        const ClassMap target = random_map(rng, 24, 16);
        const auto ex = to_training_example(img, target, {24, 16});
        const auto out = augment(ex, rng);
        const auto sm = compute_metrics(out.target, out.target);
        for (int c = 0; c < kNumClasses; ++c) min_self = std::min(min_self, sm.dsc[c]);
        std::array<int, 4> a{}, b{};
        for (auto v : ex.target.labels.pixels()) ++a[v];
        for (auto v : out.target.labels.pixels()) ++b[v];
        hist_changes += a != b;
    }
    return {bad == 0 && min_self == 1.0 && hist_changes == 0,
            std::to_string(100 - bad) + "/100 ClassMaps bit-exact, augmented target self-DSC min " + fmt(min_self) +
                ", class histograms preserved in " + std::to_string(100 - hist_changes) + "/100"};
}

// ---------------------------------------------------------------------------
// Learning criteria

struct Data {
    std::vector<SynthSample> samples;
    SplitManifest manifest;
    std::vector<TrainingExample> train, val;
    std::vector<std::size_t> test;
};

Data make_data(std::uint64_t seed) {
    Data d;
    d.samples = synth_dataset(70, seed);
    std::vector<SampleRecord> recs;
    for (const auto& s : d.samples) recs.push_back(s.record);
    d.manifest = stratified_split(recs, {0.70, 0.15, 0.15}, seed);
    for (std::size_t i = 0; i < d.samples.size(); ++i) {
        const Split s = d.manifest.records[i].split;
        if (s == Split::test) {
            d.test.push_back(i);
            continue;
        }
        auto ex = to_training_example(normalize_m11(d.samples[i].image), d.samples[i].labels);
        (s == Split::train ? d.train : d.val).push_back(std::move(ex));
    }
    return d;
}

struct LegResult {
    double val_acc = 0.0;
    double test_mtdsc = 0.0;
    double minutes = 0.0;
    int best_epoch = 0;
};

LegResult run_leg(const Data& d, const ModelSpec& spec, std::uint64_t seed, const std::string& tag) {
    const auto t0 = std::chrono::steady_clock::now();
    UNet model = build(spec, seed);
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.seed = seed;
    FitOptions opts;
    opts.on_epoch = [&](const EpochRecord& r) {
        std::cerr << "  [" << tag << "] epoch " << r.epoch << ": train_loss " << fmt(r.train_loss) << ", val_loss "
                  << fmt(r.val_loss) << ", val_acc " << fmt(r.val_pixel_acc) << " (" << fmt(r.seconds, 3) << " s)\n";
    };
    const FitResult fr = fit(model, d.train, d.val, cfg, opts);
    LegResult out;
    out.best_epoch = fr.best_epoch;
    out.val_acc = fr.curves[fr.best_epoch - 1].val_pixel_acc;
    std::vector<SampleMetrics> per;
    for (auto i : d.test) per.push_back(compute_metrics(predict(model, d.samples[i].image), d.samples[i].labels));
    out.test_mtdsc = aggregate(per).mean_tissue_dsc.mean;
    out.minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
    return out;
}

Outcome desk_scale_learning(const std::string& weights) {
    constexpr std::uint64_t kSeed = 2024;
    const Data d = make_data(kSeed);
    const auto c = d.manifest.counts();
    std::ostringstream os;
    os << "split " << c[0] << "/" << c[1] << "/" << c[2] << "; ";

    ModelSpec random_spec;
    const LegResult rnd = run_leg(d, random_spec, kSeed, "random init");
    os << "random init: val acc " << fmt(rnd.val_acc) << ", test mtDSC " << fmt(rnd.test_mtdsc) << " ("
       << fmt(rnd.minutes, 3) << " min); ";

    if (weights.empty() || !fs::exists(weights)) {
        os << "pretrained: NOT RUN, no ImageNet ResNet-34 weight archive available (set M11SEG_RESNET34_WEIGHTS)";
        return {false, os.str()};
    }
    ModelSpec pre_spec;
    pre_spec.pretrained = true;
    pre_spec.weights_path = weights;
    const LegResult pre = run_leg(d, pre_spec, kSeed, "pretrained");
    os << "pretrained: val acc " << fmt(pre.val_acc) << " (>= 0.95), test mtDSC " << fmt(pre.test_mtdsc)
       << " (>= 0.85) (" << fmt(pre.minutes, 3) << " min); random strictly lower: "
       << (rnd.test_mtdsc < pre.test_mtdsc ? "yes" : "no");
    return {pre.val_acc >= 0.95 && pre.test_mtdsc >= 0.85 && rnd.test_mtdsc < pre.test_mtdsc, os.str()};
}

Outcome overfit_one_sample() {
    const auto s = synth_sample(0, 7);
    const std::vector<TrainingExample> one{to_training_example(normalize_m11(s.image), s.labels)};
    TrainConfig cfg;
    cfg.epochs = 50;
    cfg.batch_size = 1;
    cfg.lr = 1e-3;
    cfg.augment = false;
    cfg.seed = 7;
    UNet model = build(ModelSpec{}, 7);
    const auto t0 = std::chrono::steady_clock::now();
    const FitResult r = fit(model, one, one, cfg);
    const double last = r.curves.back().train_pixel_acc;
    const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
    return {last > 0.99, "training pixel accuracy after 50 epochs " + fmt(last, 6) + " (> 0.99), " +
                             fmt(minutes, 3) + " min"};
}

}  // namespace

int main(int argc, char** argv) {
    std::string group = "all";
    std::string weights;
    if (const char* env = std::getenv("M11SEG_RESNET34_WEIGHTS")) weights = env;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--group" && i + 1 < argc) group = argv[++i];
        else if (a == "--pretrained-weights" && i + 1 < argc) weights = argv[++i];
        else {
            std::cerr << "usage: acceptance [--group fast|learning|all] [--pretrained-weights FILE]\n";
            return 2;
        }
    }
    if (group != "fast" && group != "learning" && group != "all") {
        std::cerr << "unknown group '" << group << "'\n";
        return 2;
    }
    torch::set_num_threads(std::max(1u, std::thread::hardware_concurrency()));

    std::vector<std::pair<std::string, std::function<Outcome()>>> criteria;
    if (group != "learning") {
        criteria.emplace_back("reported-dsc-consistency", reported_dsc);
        criteria.emplace_back("split-reproduction", split_reproduction);
        criteria.emplace_back("mask-compositing-oracle", compositing_oracle);
        criteria.emplace_back("metric-identities", metric_identities);
        criteria.emplace_back("loss-analytics", loss_analytics);
        criteria.emplace_back("architecture-contract", architecture);
        criteria.emplace_back("round-trips", round_trips);
    }
    if (group != "fast") {
        criteria.emplace_back("overfit-one-sample", overfit_one_sample);
        criteria.emplace_back("desk-scale-learning", [&] { return desk_scale_learning(weights); });
    }

    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    }
    std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
