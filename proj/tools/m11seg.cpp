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

// m11seg command-line entry point: synth, split, train, eval, predict, annotate.

#include <algorithm>
#include <atomic>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "m11seg/error.hpp"
#include "m11seg/evaluate.hpp"
#include "m11seg/model.hpp"
#include "m11seg/png_io.hpp"
#include "m11seg/service.hpp"
#include "m11seg/synth.hpp"
#include "m11seg/train.hpp"

namespace fs = std::filesystem;
using namespace m11seg;

namespace {

struct Options {
    std::uint64_t seed = 0;
    std::string config;
    std::string data_root = ".";
    std::string output_dir = "out";
    std::string manifest;

    // synth
    std::size_t n = 70;
    // split
    std::vector<double> ratios{0.70, 0.15, 0.15};
    // train
    int epochs = 50;
    int batch_size = 8;
    double lr = 1e-4;
    double weight_decay = 1e-5;
    double ce_weight = 0.5;
    double dice_weight = 0.5;
    bool augment = true;
    bool mixed_precision = false;
    bool freeze_encoder_bn = false;
    int input_size = 512;
    std::string pretrained_weights;
    // eval / predict
    std::string checkpoint;
    std::string split = "test";
    std::string pred_dir;
    std::string gt_dir;
    std::string policy = "score_one";
    std::vector<std::string> images;
    // annotate
    std::string host = "127.0.0.1";
    int port = 8080;
    double display_scale = 0.5;
};

fs::path manifest_path(const Options& o) {
    return o.manifest.empty() ? fs::path(o.data_root) / "manifest.json" : fs::path(o.manifest);
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

int cmd_synth(const Options& o) {
    auto samples = synth_dataset(o.n, o.seed);
    const auto manifest = write_synth_dataset(o.output_dir, samples, o.seed);
    std::cout << "wrote " << manifest.records.size() << " synthetic samples to " << o.output_dir
              << " (seed " << o.seed << ")\n";
    return 0;
}

int cmd_split(const Options& o) {
    const SplitManifest in = load_manifest(manifest_path(o));
    const SplitRatios ratios{o.ratios[0], o.ratios[1], o.ratios[2]};
    const SplitManifest out = stratified_split(in.records, ratios, o.seed);
    fs::create_directories(o.output_dir);
    const auto path = fs::path(o.output_dir) / "manifest.json";
    write_json(path, manifest_to_json(out));
    for (const auto& w : out.warnings) std::cerr << "warning: " << w << '\n';
    const auto c = out.counts();
    std::cout << "train " << c[0] << ", val " << c[1] << ", test " << c[2] << " -> " << path.string()
              << " (seed " << o.seed << ")\n";
    return 0;
}

int cmd_train(const Options& o) {
    const SplitManifest manifest = load_manifest(manifest_path(o));
    if (manifest.in_split(Split::train).empty() || manifest.in_split(Split::val).empty())
        throw InvalidArgument("manifest has no train/val records; run `m11seg split` first");

    TrainConfig cfg;
    cfg.epochs = o.epochs;
    cfg.batch_size = o.batch_size;
    cfg.lr = o.lr;
    cfg.weight_decay = o.weight_decay;
    cfg.loss_weights = {o.ce_weight, o.dice_weight};
    cfg.augment = o.augment;
    cfg.mixed_precision = o.mixed_precision;
    cfg.seed = o.seed;
    cfg.validate();

    ModelSpec spec;
    spec.input_size = {o.input_size, o.input_size};
    spec.freeze_encoder_bn = o.freeze_encoder_bn;
    if (!o.pretrained_weights.empty()) {
        spec.pretrained = true;
        spec.weights_path = o.pretrained_weights;
    }
    spec.validate();

    UNet model = build(spec, o.seed);
    FitOptions fo;
    fo.output_dir = fs::path(o.output_dir);
    fo.verbose = true;
    fs::create_directories(o.output_dir);
    write_json(fs::path(o.output_dir) / "train_config.json",
               {{"seed", o.seed}, {"train", cfg}, {"model", spec}, {"manifest", manifest_path(o).string()}});
    const FitResult r = fit(model, manifest, o.data_root, cfg, fo);
    std::cout << "best epoch " << r.best_epoch << " (val loss " << r.best_val_loss << ") -> "
              << r.checkpoint_path->string() << '\n';
    return 0;
}

EmptyClassPolicy parse_policy(const std::string& s) {
    if (s == "score_one") return EmptyClassPolicy::score_one;
    if (s == "exclude") return EmptyClassPolicy::exclude;
    throw InvalidArgument("empty-class policy must be score_one or exclude");
}

std::vector<const SampleRecord*> split_records(const SplitManifest& m, const std::string& split) {
    const auto recs = m.in_split(parse_split(split));
    if (recs.empty()) throw InvalidArgument("manifest has no '" + split + "' records");
    return recs;
}

int cmd_eval(const Options& o) {
    std::vector<SampleMetrics> per_sample;
    if (!o.pred_dir.empty() || !o.gt_dir.empty()) {
        if (o.pred_dir.empty() || o.gt_dir.empty()) throw InvalidArgument("--pred-dir and --gt-dir go together");
        std::vector<fs::path> gts;
        for (const auto& e : fs::directory_iterator(o.gt_dir))
            if (e.path().extension() == ".png") gts.push_back(e.path());
        std::sort(gts.begin(), gts.end());
        if (gts.empty()) throw InvalidArgument("no .png ClassMaps in " + o.gt_dir);
        for (const auto& gt : gts) {
            const auto pred = fs::path(o.pred_dir) / gt.filename();
            if (!fs::exists(pred)) throw FileNotFound("missing prediction " + pred.string());
            per_sample.push_back(compute_metrics(decode_classmap(pred), decode_classmap(gt), gt.stem().string()));
        }
    } else {
        if (o.checkpoint.empty()) throw InvalidArgument("eval needs --checkpoint or --pred-dir/--gt-dir");
        auto ckpt = load_checkpoint(o.checkpoint);
        const SplitManifest m = load_manifest(manifest_path(o));
        for (const auto* r : split_records(m, o.split)) {
            const auto [img, gt] = load_record(*r, o.data_root);
            per_sample.push_back(compute_metrics(predict(ckpt.model, img), gt, r->sample_id));
        }
    }
    EvalReport report = aggregate(per_sample, parse_policy(o.policy));
    report.seed = o.seed;
    fs::create_directories(o.output_dir);
    write_json(fs::path(o.output_dir) / "report.json", report_to_json(report));
    const std::string table = "# seed=" + std::to_string(o.seed) + "\n" + render_report_table(report);
    write_file_atomic(fs::path(o.output_dir) / "report.txt", table);
    std::cout << table;
    return 0;
}

int cmd_predict(const Options& o) {
    if (o.checkpoint.empty()) throw InvalidArgument("predict needs --checkpoint");
    auto ckpt = load_checkpoint(o.checkpoint);
    std::vector<M11Image> inputs;
    if (!o.images.empty()) {
        for (const auto& p : o.images) {
            M11Image img = load_m11(p);
            img.sample_id = fs::path(p).stem().string();
            inputs.push_back(std::move(img));
        }
    } else {
        const SplitManifest m = load_manifest(manifest_path(o));
        for (const auto* r : split_records(m, o.split)) inputs.push_back(load_record(*r, o.data_root).first);
    }
    const fs::path out(o.output_dir);
    fs::create_directories(out / "pred");
    fs::create_directories(out / "overlay");
    nlohmann::json index{{"seed", o.seed}, {"checkpoint", o.checkpoint}, {"samples", nlohmann::json::array()}};
    for (const auto& img : inputs) {
        const ClassMap map = predict(ckpt.model, img);
        encode_classmap(map, out / "pred" / (img.sample_id + ".png"));
        const auto overlay = encode_png_rgb(render_overlay(normalize_m11(img), map));
        write_file_atomic(out / "overlay" / (img.sample_id + ".png"), overlay);
        index["samples"].push_back(img.sample_id);
        std::cout << img.sample_id << '\n';
    }
    write_json(out / "predict.json", index);
    return 0;
}

std::atomic<AnnotationService*> g_service{nullptr};

int cmd_annotate(const Options& o) {
    ServiceConfig cfg;
    cfg.data_root = o.data_root;
    cfg.host = o.host;
    cfg.port = o.port;
    cfg.display_scale = o.display_scale;
    AnnotationService service(cfg);
    g_service = &service;
    std::signal(SIGINT, [](int) {
        if (auto* s = g_service.load()) s->stop();
    });
    std::signal(SIGTERM, [](int) {
        if (auto* s = g_service.load()) s->stop();
    });
    std::cerr << "serving " << o.data_root << " on http://" << o.host << ":" << o.port << '\n';
    service.listen();
    g_service = nullptr;
    return 0;
}

/// Turns a JSON config into trailing command-line arguments. Top-level keys
/// and keys under the active subcommand's name are accepted.
std::vector<std::string> config_args(const std::string& path, const std::string& command,
                                     const std::vector<std::string>& subcommands) {
    std::ifstream in(path);
    if (!in) throw FileNotFound("no config file at '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw CorruptFile("config '" + path + "': " + e.what());
    }
    if (!j.is_object()) throw InvalidArgument("config must be a JSON object");
    std::vector<std::string> args;
    auto emit = [&args](const std::string& key, const nlohmann::json& v) {
        std::string flag = "--" + key;
        std::replace(flag.begin(), flag.end(), '_', '-');
        args.push_back(flag);
        auto scalar = [](const nlohmann::json& x) { return x.is_string() ? x.get<std::string>() : x.dump(); };
        if (v.is_array())
            for (const auto& x : v) args.push_back(scalar(x));
        else
            args.push_back(scalar(v));
    };
    for (const auto& [key, v] : j.items()) {
        if (std::find(subcommands.begin(), subcommands.end(), key) != subcommands.end()) continue;
        if (key == "config") throw InvalidArgument("config files cannot include other configs");
        emit(key, v);
    }
    if (j.contains(command))
        for (const auto& [key, v] : j[command].items()) emit(key, v);
    return args;
}

struct Cli {
    CLI::App app{"M11 Mueller microscopy four-class segmentation", "m11seg"};
    Options o;
    std::map<std::string, CLI::App*> sub;

    Cli() {
        app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
        app.require_subcommand(1);
        app.failure_message(CLI::FailureMessage::help);

        app.add_option("--seed", o.seed, "Root seed echoed into every output")->capture_default_str();
        app.add_option("--config", o.config, "JSON config; its values override flags");
        app.add_option("--data-root", o.data_root, "Dataset root")->envname("M11SEG_DATA_ROOT")->capture_default_str();
        app.add_option("-o,--output-dir", o.output_dir, "Output directory")->capture_default_str();
        app.add_option("--manifest", o.manifest, "Manifest path (default <data-root>/manifest.json)");

        auto* s = sub["synth"] = app.add_subcommand("synth", "Write a synthetic dataset to --output-dir");
        s->add_option("--n", o.n, "Number of samples")->capture_default_str()->check(CLI::PositiveNumber);

        s = sub["split"] = app.add_subcommand("split", "Stratified train/val/test split by acquisition day");
        s->add_option("--ratios", o.ratios, "train val test ratios")->expected(3)->capture_default_str();

        s = sub["train"] = app.add_subcommand("train", "Fit the U-Net; writes best.m11w and curves");
        s->add_option("--epochs", o.epochs)->capture_default_str();
        s->add_option("--batch-size", o.batch_size)->capture_default_str();
        s->add_option("--lr", o.lr)->capture_default_str();
        s->add_option("--weight-decay", o.weight_decay)->capture_default_str();
        s->add_option("--ce-weight", o.ce_weight)->capture_default_str();
        s->add_option("--dice-weight", o.dice_weight)->capture_default_str();
        s->add_option("--augment", o.augment)->capture_default_str();
        s->add_option("--mixed-precision", o.mixed_precision, "bfloat16 autocast on CPU")->capture_default_str();
        s->add_option("--freeze-encoder-bn", o.freeze_encoder_bn)->capture_default_str();
        s->add_option("--input-size", o.input_size, "Network input side, multiple of 32")->capture_default_str();
        s->add_option("--pretrained-weights", o.pretrained_weights, "ResNet-34 encoder archive");

        s = sub["eval"] = app.add_subcommand("eval", "Score predictions; writes report.json and report.txt");
        s->add_option("--checkpoint", o.checkpoint);
        s->add_option("--split", o.split)->capture_default_str();
        s->add_option("--pred-dir", o.pred_dir, "Predicted ClassMap PNGs");
        s->add_option("--gt-dir", o.gt_dir, "Ground-truth ClassMap PNGs, matched by file name");
        s->add_option("--empty-class-policy", o.policy)->capture_default_str();

        s = sub["predict"] = app.add_subcommand("predict", "Write ClassMap PNGs and overlays");
        s->add_option("--checkpoint", o.checkpoint)->required();
        s->add_option("--split", o.split)->capture_default_str();
        s->add_option("--image", o.images, "M11 TIFF files (instead of a manifest split)")
            ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);

        s = sub["annotate"] = app.add_subcommand("annotate", "Serve the annotation HTTP API");
        s->add_option("--host", o.host)->capture_default_str();
        s->add_option("--port", o.port)->envname("M11SEG_PORT")->capture_default_str();
        s->add_option("--display-scale", o.display_scale)->capture_default_str();

        for (auto& [name, app_ptr] : sub) app_ptr->fallthrough();
    }

    std::string active() const {
        for (const auto& [name, s] : sub)
            if (s->parsed()) return name;
        return {};
    }
};

int dispatch(const std::string& cmd, const Options& o) {
    if (cmd == "synth") return cmd_synth(o);
    if (cmd == "split") return cmd_split(o);
    if (cmd == "train") return cmd_train(o);
    if (cmd == "eval") return cmd_eval(o);
    if (cmd == "predict") return cmd_predict(o);
    return cmd_annotate(o);
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::string cmd;
    auto cli = std::make_unique<Cli>();
    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        cli->app.parse(rev);
        cmd = cli->active();
        if (!cli->o.config.empty()) {
            std::vector<std::string> names;
            for (const auto& [name, s] : cli->sub) names.push_back(name);
            auto extra = config_args(cli->o.config, cmd, names);
            auto merged = args;
            merged.insert(merged.end(), extra.begin(), extra.end());
            cli = std::make_unique<Cli>();
            std::vector<std::string> rev2(merged.rbegin(), merged.rend());
            cli->app.parse(rev2);
        }
    } catch (const CLI::ParseError& e) {
        return cli->app.exit(e);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    try {
        return dispatch(cmd, cli->o);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
