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

#include "m11seg/train.hpp"

#include <ATen/autocast_mode.h>

#include <chrono>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>

#include "m11seg/error.hpp"
#include "m11seg/png_io.hpp"

namespace m11seg {
namespace {

class AutocastScope {
public:
    explicit AutocastScope(bool on) : on_(on) {
        if (!on_) return;
        prev_ = at::autocast::is_autocast_enabled(at::kCPU);
        at::autocast::set_autocast_dtype(at::kCPU, at::kBFloat16);
        at::autocast::set_autocast_enabled(at::kCPU, true);
    }
    ~AutocastScope() {
        if (!on_) return;
        at::autocast::set_autocast_enabled(at::kCPU, prev_);
        at::autocast::clear_cache();
    }
    AutocastScope(const AutocastScope&) = delete;
    AutocastScope& operator=(const AutocastScope&) = delete;

private:
    bool on_;
    bool prev_ = false;
};

std::int64_t correct_pixels(const torch::Tensor& logits, const torch::Tensor& target) {
    return logits.argmax(1).eq(target).sum().item<std::int64_t>();
}

std::vector<TrainingExample> gather(const std::vector<TrainingExample>& set, std::span<const std::size_t> idx) {
    std::vector<TrainingExample> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(set[i]);
    return out;
}

}  // namespace

void TrainConfig::validate() const {
    if (!(lr > 0) || !(weight_decay > 0)) throw InvalidArgument("lr and weight_decay must be positive");
    if (batch_size <= 0) throw InvalidArgument("batch_size must be positive");
    if (epochs <= 0) throw InvalidArgument("no epochs: epochs must be at least 1");
    if (loss_weights.ce < 0 || loss_weights.dice < 0 ||
        std::abs(loss_weights.ce + loss_weights.dice - 1.0) > 1e-9)
        throw InvalidArgument("loss weights must be non-negative and sum to 1");
    if (!(dice_smooth > 0)) throw InvalidArgument("dice_smooth must be positive");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"lr", c.lr},
                       {"weight_decay", c.weight_decay},
                       {"batch_size", c.batch_size},
                       {"epochs", c.epochs},
                       {"loss_weights", {{"ce", c.loss_weights.ce}, {"dice", c.loss_weights.dice}}},
                       {"dice_smooth", c.dice_smooth},
                       {"dice_include_background", c.dice_include_background},
                       {"seed", c.seed},
                       {"mixed_precision", c.mixed_precision},
                       {"augment", c.augment}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    c.lr = j.value("lr", c.lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    if (j.contains("loss_weights")) {
        const auto& w = j.at("loss_weights");
        c.loss_weights.ce = w.value("ce", c.loss_weights.ce);
        c.loss_weights.dice = w.value("dice", c.loss_weights.dice);
    }
    c.dice_smooth = j.value("dice_smooth", c.dice_smooth);
    c.dice_include_background = j.value("dice_include_background", c.dice_include_background);
    c.seed = j.value("seed", c.seed);
    c.mixed_precision = j.value("mixed_precision", c.mixed_precision);
    c.augment = j.value("augment", c.augment);
}

EvalPass evaluate_loss(UNet& model, const std::vector<TrainingExample>& set, const TrainConfig& cfg) {
    if (set.empty()) throw InvalidArgument("evaluate_loss: empty set");
    const bool was_training = model->is_training();
    model->eval();
    torch::NoGradGuard no_grad;
    double loss_sum = 0.0;
    std::int64_t correct = 0, total = 0;
    const auto bs = static_cast<std::size_t>(cfg.batch_size);
    for (std::size_t start = 0; start < set.size(); start += bs) {
        const auto n = std::min(bs, set.size() - start);
        const Batch batch = collate(std::span(set).subspan(start, n));
        torch::Tensor logits;
        {
            AutocastScope autocast(cfg.mixed_precision);
            logits = model->forward(batch.input);
        }
        logits = logits.to(torch::kFloat);
        loss_sum += total_loss(logits, batch.target, cfg.loss_weights, cfg.dice()).item<double>() * double(n);
        correct += correct_pixels(logits, batch.target);
        total += batch.target.numel();
    }
    if (was_training) model->train();
    return {loss_sum / double(set.size()), double(correct) / double(total)};
}

FitResult fit(UNet& model, const std::vector<TrainingExample>& train, const std::vector<TrainingExample>& val,
              const TrainConfig& cfg, const FitOptions& opts) {
    cfg.validate();
    if (train.empty()) throw InvalidArgument("fit: empty training split");
    if (val.empty()) throw InvalidArgument("fit: empty validation split");

    torch::manual_seed(derive_seed(cfg.seed, 0x7EA1));
    std::vector<torch::Tensor> trainable;
    for (auto& p : model->parameters())
        if (p.requires_grad()) trainable.push_back(p);
    torch::optim::AdamW optimizer(trainable,
                                  torch::optim::AdamWOptions(cfg.lr).weight_decay(cfg.weight_decay));

    FitResult result;
    std::vector<std::pair<std::string, torch::Tensor>> best_state;
    const auto bs = static_cast<std::size_t>(cfg.batch_size);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        model->train();

        std::vector<std::size_t> order(train.size());
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 order_rng(derive_seed(cfg.seed, 0x0DE5, std::uint64_t(epoch)));
        shuffle_deterministic(order, order_rng);

        double loss_sum = 0.0;
        std::int64_t correct = 0, total = 0;
        for (std::size_t start = 0, b = 0; start < order.size(); start += bs, ++b) {
            const auto n = std::min(bs, order.size() - start);
            auto examples = gather(train, std::span(order).subspan(start, n));
            if (cfg.augment) {
                for (auto& ex : examples) {
                    std::mt19937_64 rng(derive_seed(cfg.seed, std::uint64_t(epoch), hash_string(ex.sample_id)));
                    ex = augment(ex, rng);
                }
            }
            const Batch batch = collate(examples);

            torch::Tensor logits;
            {
                AutocastScope autocast(cfg.mixed_precision);
                logits = model->forward(batch.input);
            }
            logits = logits.to(torch::kFloat);
            auto loss = total_loss(logits, batch.target, cfg.loss_weights, cfg.dice());
            const double value = loss.item<double>();
            if (!std::isfinite(value)) {
                std::ostringstream os;
                os << "non-finite loss (" << value << ") at epoch " << epoch << ", batch " << b;
                throw TrainingError(os.str());
            }
            optimizer.zero_grad();
            loss.backward();
            optimizer.step();

            loss_sum += value * double(n);
            {
                torch::NoGradGuard no_grad;
                correct += correct_pixels(logits, batch.target);
            }
            total += batch.target.numel();
        }

        const EvalPass v = evaluate_loss(model, val, cfg);
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / double(train.size());
        rec.train_pixel_acc = double(correct) / double(total);
        rec.val_loss = v.loss;
        rec.val_pixel_acc = v.pixel_acc;
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.curves.push_back(rec);

        if (result.best_epoch == 0 || rec.val_loss < result.best_val_loss) {
            result.best_epoch = epoch;
            result.best_val_loss = rec.val_loss;
            best_state.clear();
            for (auto& [name, t] : model_state(model)) best_state.emplace_back(name, t.detach().clone());
        }
        if (opts.verbose)
            std::cerr << std::fixed << std::setprecision(4) << "epoch " << epoch << "/" << cfg.epochs
                      << "  train_loss " << rec.train_loss << "  val_loss " << rec.val_loss << "  train_acc "
                      << rec.train_pixel_acc << "  val_acc " << rec.val_pixel_acc << "  (" << std::setprecision(1)
                      << rec.seconds << " s)\n";
        if (opts.on_epoch) opts.on_epoch(rec);
    }

    load_model_state(model, best_state);
    model->eval();

    if (opts.output_dir) {
        std::filesystem::create_directories(*opts.output_dir);
        const auto ckpt = *opts.output_dir / "best.m11w";
        save_checkpoint(ckpt, model, {result.best_epoch, result.best_val_loss, cfg.seed});
        write_file_atomic(*opts.output_dir / "curves.csv", curves_csv(result.curves, cfg.seed));
        write_file_atomic(*opts.output_dir / "curves.svg", curves_svg(result.curves));
        result.checkpoint_path = ckpt;
    }
    return result;
}

std::pair<M11Image, ClassMap> load_record(const SampleRecord& r, const std::filesystem::path& data_root) {
    auto resolve = [&](const std::string& p) {
        const std::filesystem::path path(p);
        return path.is_absolute() ? path : data_root / path;
    };
    if (r.image_path.empty()) throw InvalidArgument("record '" + r.sample_id + "' has no image_path");
    M11Image img = load_m11(resolve(r.image_path));
    img.sample_id = r.sample_id;
    img.acquisition_day = r.acquisition_day;

    ClassMap labels;
    if (!r.classmap_path.empty()) {
        labels = decode_classmap(resolve(r.classmap_path));
    } else {
        auto mask = [&](const char* key, Structure s) {
            const auto it = r.mask_paths.find(key);
            if (it == r.mask_paths.end()) return BinaryMask(img.width(), img.height(), s);
            return decode_binary_mask(resolve(it->second), s);
        };
        labels = composite(mask("tissue", Structure::tissue), mask("os", Structure::os),
                           mask("vaginal_wall", Structure::vaginal_wall));
    }
    return {std::move(img), std::move(labels)};
}

std::vector<TrainingExample> load_examples(const SplitManifest& manifest, const std::filesystem::path& data_root,
                                           Split split, Size input_size) {
    std::vector<TrainingExample> out;
    for (const auto* r : manifest.in_split(split)) {
        auto [img, labels] = load_record(*r, data_root);
        out.push_back(to_training_example(normalize_m11(img), labels, input_size));
    }
    return out;
}

FitResult fit(UNet& model, const SplitManifest& manifest, const std::filesystem::path& data_root,
              const TrainConfig& cfg, const FitOptions& opts) {
    cfg.validate();
    const Size size = model->spec().input_size;
    const auto train = load_examples(manifest, data_root, Split::train, size);
    const auto val = load_examples(manifest, data_root, Split::val, size);
    return fit(model, train, val, cfg, opts);
}

std::string curves_csv(const std::vector<EpochRecord>& curves, std::uint64_t seed) {
    std::ostringstream os;
    os << "# seed=" << seed << '\n';
    os << "epoch,train_loss,val_loss,train_acc,val_acc\n";
    os << std::setprecision(8);
    for (const auto& r : curves)
        os << r.epoch << ',' << r.train_loss << ',' << r.val_loss << ',' << r.train_pixel_acc << ','
           << r.val_pixel_acc << '\n';
    return os.str();
}

std::string curves_svg(const std::vector<EpochRecord>& curves) {
    constexpr double kPanelW = 420, kPanelH = 300, kMargin = 50, kGap = 40;
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    const double width = 2 * (kPanelW + kMargin) + kGap;
    const double height = kPanelH + 2 * kMargin;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    const double max_epoch = curves.empty() ? 1.0 : std::max(1, curves.back().epoch);
    auto panel = [&](int idx, const std::string& title, auto train_of, auto val_of, double lo, double hi) {
        const double x0 = kMargin + idx * (kPanelW + kMargin + kGap);
        const double y0 = kMargin;
        if (hi <= lo) hi = lo + 1.0;
        auto px = [&](double e) { return x0 + (e - 1.0) / std::max(1.0, max_epoch - 1.0) * kPanelW; };
        auto py = [&](double v) { return y0 + kPanelH - (v - lo) / (hi - lo) * kPanelH; };
        os << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << kPanelW << "\" height=\"" << kPanelH
           << "\" fill=\"none\" stroke=\"black\"/>\n";
        os << "<text x=\"" << x0 + kPanelW / 2 << "\" y=\"" << y0 - 15 << "\" text-anchor=\"middle\">" << title
           << "</text>\n";
        os << "<text x=\"" << x0 + kPanelW / 2 << "\" y=\"" << y0 + kPanelH + 35
           << "\" text-anchor=\"middle\">epoch</text>\n";
        for (int t = 0; t <= 4; ++t) {
            const double v = lo + (hi - lo) * t / 4.0;
            os << "<text x=\"" << x0 - 5 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\">"
               << std::setprecision(3) << v << std::setprecision(2) << "</text>\n";
        }
        auto line = [&](auto value_of, const char* color, const char* label, int row) {
            os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
            for (const auto& r : curves) os << px(r.epoch) << ',' << py(value_of(r)) << ' ';
            os << "\"/>\n";
            os << "<text x=\"" << x0 + kPanelW - 80 << "\" y=\"" << y0 + 20 + 16 * row << "\" fill=\"" << color
               << "\">" << label << "</text>\n";
        };
        line(train_of, "#1f77b4", "train", 0);
        line(val_of, "#d62728", "validation", 1);
    };

    double lo = 0.0, hi = 0.0;
    for (const auto& r : curves) hi = std::max({hi, r.train_loss, r.val_loss});
    panel(0, "Combined loss", [](const EpochRecord& r) { return r.train_loss; },
          [](const EpochRecord& r) { return r.val_loss; }, lo, hi * 1.05);
    lo = 1.0;
    for (const auto& r : curves) lo = std::min({lo, r.train_pixel_acc, r.val_pixel_acc});
    panel(1, "Pixel accuracy", [](const EpochRecord& r) { return r.train_pixel_acc; },
          [](const EpochRecord& r) { return r.val_pixel_acc; }, std::floor(lo * 20.0) / 20.0, 1.0);
    os << "</svg>\n";
    return os.str();
}

}  // namespace m11seg
