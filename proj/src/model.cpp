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

#include "m11seg/model.hpp"

#include <sstream>

#include "m11seg/error.hpp"

namespace m11seg {
namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace {

nn::Conv2d conv(int in, int out, int k, int stride, int pad, bool bias = false) {
    return nn::Conv2d(nn::Conv2dOptions(in, out, k).stride(stride).padding(pad).bias(bias));
}

nn::Sequential conv_bn_relu(int in, int out) {
    return nn::Sequential(conv(in, out, 3, 1, 1), nn::BatchNorm2d(out), nn::ReLU(nn::ReLUOptions(true)));
}

std::string shape_str(at::IntArrayRef s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? ", " : "") << s[i];
    os << ']';
    return os.str();
}

StageShape shape_of(const torch::Tensor& t) { return {t.size(1), t.size(2), t.size(3)}; }

}  // namespace

// ---------------------------------------------------------------------------

void ModelSpec::validate() const {
    if (encoder_channels != kResNet34Channels)
        throw InvalidArgument("encoder_channels must be the ResNet-34 signature [64, 64, 128, 256, 512]");
    if (num_classes != kNumClasses) throw InvalidArgument("num_classes must be 4");
    for (int c : decoder_channels)
        if (c <= 0) throw InvalidArgument("decoder channels must be positive");
    if (input_size.width <= 0 || input_size.height <= 0 || input_size.width % 32 ||
        input_size.height % 32)
        throw InvalidArgument("input size must be a positive multiple of 32");
    if (pretrained && !weights_path)
        throw InvalidArgument("pretrained encoder requested without a weights_path");
}

void to_json(nlohmann::json& j, const ModelSpec& s) {
    j = nlohmann::json{{"encoder", "resnet34"},
                       {"encoder_channels", s.encoder_channels},
                       {"decoder_channels", s.decoder_channels},
                       {"num_classes", s.num_classes},
                       {"input_size", {s.input_size.width, s.input_size.height}},
                       {"pretrained", s.pretrained},
                       {"freeze_encoder_bn", s.freeze_encoder_bn}};
    if (s.weights_path) j["weights_path"] = s.weights_path->string();
}

void from_json(const nlohmann::json& j, ModelSpec& s) {
    s.encoder_channels = j.value("encoder_channels", kResNet34Channels);
    s.decoder_channels = j.value("decoder_channels", s.decoder_channels);
    s.num_classes = j.value("num_classes", kNumClasses);
    if (j.contains("input_size")) {
        const auto sz = j.at("input_size").get<std::array<int, 2>>();
        s.input_size = {sz[0], sz[1]};
    }
    s.pretrained = j.value("pretrained", false);
    s.freeze_encoder_bn = j.value("freeze_encoder_bn", false);
    if (j.contains("weights_path")) s.weights_path = j.at("weights_path").get<std::string>();
}

// ---------------------------------------------------------------------------

BasicBlockImpl::BasicBlockImpl(int in, int out, int stride) {
    conv1 = register_module("conv1", conv(in, out, 3, stride, 1));
    bn1 = register_module("bn1", nn::BatchNorm2d(out));
    conv2 = register_module("conv2", conv(out, out, 3, 1, 1));
    bn2 = register_module("bn2", nn::BatchNorm2d(out));
    if (stride != 1 || in != out)
        downsample = register_module("downsample", nn::Sequential(conv(in, out, 1, stride, 0), nn::BatchNorm2d(out)));
}

torch::Tensor BasicBlockImpl::forward(const torch::Tensor& x) {
    auto y = torch::relu(bn1(conv1(x)));
    y = bn2(conv2(y));
    const auto identity = downsample ? downsample->forward(x) : x;
    return torch::relu(y + identity);
}

ResNet34EncoderImpl::ResNet34EncoderImpl() {
    conv1 = register_module("conv1", conv(3, 64, 7, 2, 3));
    bn1 = register_module("bn1", nn::BatchNorm2d(64));
    maxpool = register_module("maxpool", nn::MaxPool2d(nn::MaxPool2dOptions(3).stride(2).padding(1)));
    int in = 64;
    for (std::size_t l = 0; l < 4; ++l) {
        const int out = kResNet34Channels[l + 1];
        nn::Sequential seq;
        for (int b = 0; b < kResNet34Blocks[l]; ++b) {
            const int stride = (b == 0 && l > 0) ? 2 : 1;
            seq->push_back(BasicBlock(b == 0 ? in : out, out, stride));
        }
        layers[l] = register_module("layer" + std::to_string(l + 1), seq);
        in = out;
    }
}

std::vector<torch::Tensor> ResNet34EncoderImpl::forward(const torch::Tensor& x) {
    std::vector<torch::Tensor> feats;
    feats.reserve(5);
    auto y = torch::relu(bn1(conv1(x)));
    feats.push_back(y);
    y = maxpool(y);
    for (auto& layer : layers) {
        y = layer->forward(y);
        feats.push_back(y);
    }
    return feats;
}

DecoderBlockImpl::DecoderBlockImpl(int in, int skip, int out) : skip_(skip) {
    conv1 = register_module("conv1", conv_bn_relu(in + skip, out));
    conv2 = register_module("conv2", conv_bn_relu(out, out));
}

torch::Tensor DecoderBlockImpl::forward(const torch::Tensor& x, const std::optional<torch::Tensor>& skip) {
    auto y = F::interpolate(x, F::InterpolateFuncOptions()
                                   .scale_factor(std::vector<double>{2.0, 2.0})
                                   .mode(torch::kBilinear)
                                   .align_corners(false));
    if (skip) y = torch::cat({y, *skip}, 1);
    return conv2->forward(conv1->forward(y));
}

UNetImpl::UNetImpl(ModelSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    encoder_ = register_module("encoder", ResNet34Encoder());
    // Skips for blocks 0..3 come from encoder stages 3, 2, 1, 0.
    int in = spec_.encoder_channels[4];
    for (int k = 0; k < 5; ++k) {
        const int skip = k < 4 ? spec_.encoder_channels[3 - k] : 0;
        const int out = spec_.decoder_channels[k];
        blocks_.push_back(register_module("decoder" + std::to_string(k), DecoderBlock(in, skip, out)));
        in = out;
    }
    head_ = register_module("head", conv(in, spec_.num_classes, 1, 1, 0, true));
}

torch::Tensor UNetImpl::forward(const torch::Tensor& batch) { return forward(batch, nullptr); }

torch::Tensor UNetImpl::forward(const torch::Tensor& batch, FeaturePyramid* trace) {
    if (batch.dim() != 4 || batch.size(1) != 3 || batch.size(2) != spec_.input_size.height ||
        batch.size(3) != spec_.input_size.width)
        throw DimensionMismatch("forward expects B x 3 x " + std::to_string(spec_.input_size.height) +
                                " x " + std::to_string(spec_.input_size.width) + ", got " +
                                shape_str(batch.sizes()));
    const auto feats = encoder_->forward(batch);
    if (trace) {
        *trace = {};
        for (const auto& f : feats) trace->stages.push_back(shape_of(f));
    }
    auto y = feats[4];
    for (int k = 0; k < 5; ++k) {
        std::optional<torch::Tensor> skip;
        if (k < 4) skip = feats[3 - k];
        if (trace) trace->decoder_inputs.push_back(y.size(1) + (skip ? skip->size(1) : 0));
        y = blocks_[k]->forward(y, skip);
        if (trace) trace->decoder.push_back(shape_of(y));
    }
    return head_->forward(y);
}

void UNetImpl::train(bool on) {
    torch::nn::Module::train(on);
    if (on && spec_.freeze_encoder_bn) {
        for (auto& m : encoder_->modules(/*include_self=*/false))
            if (auto* bn = m->as<nn::BatchNorm2d>()) bn->eval();
    }
}

// ---------------------------------------------------------------------------

UNet build(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    torch::manual_seed(seed);
    UNet model(spec);

    torch::NoGradGuard no_grad;
    for (auto& m : model->encoder()->modules(false)) {
        if (auto* c = m->as<nn::Conv2d>())
            nn::init::kaiming_normal_(c->weight, 0.0, torch::kFanOut, torch::kReLU);
        else if (auto* bn = m->as<nn::BatchNorm2d>()) {
            nn::init::ones_(bn->weight);
            nn::init::zeros_(bn->bias);
        }
    }
    for (auto& item : model->named_modules("", false)) {
        if (item.key().rfind("encoder", 0) == 0) continue;
        const auto& m = item.value();
        if (auto* c = m->as<nn::Conv2d>()) {
            nn::init::kaiming_uniform_(c->weight, 0.0, torch::kFanIn, torch::kReLU);
            if (c->bias.defined()) nn::init::zeros_(c->bias);
        } else if (auto* bn = m->as<nn::BatchNorm2d>()) {
            nn::init::ones_(bn->weight);
            nn::init::zeros_(bn->bias);
        }
    }

    if (spec.pretrained) load_encoder_weights(model, load_weights(*spec.weights_path));
    if (spec.freeze_encoder_bn) {
        for (auto& m : model->encoder()->modules(false))
            if (auto* bn = m->as<nn::BatchNorm2d>()) {
                bn->weight.set_requires_grad(false);
                bn->bias.set_requires_grad(false);
            }
    }
    return model;
}

void load_encoder_weights(UNet& model, const WeightArchive& archive) {
    torch::NoGradGuard no_grad;
    auto assign = [&](const std::string& name, torch::Tensor& dst, bool optional) {
        const torch::Tensor* src = archive.find(name);
        if (!src) {
            if (optional) return;
            throw WeightMismatch(name, "missing from archive");
        }
        if (src->sizes() != dst.sizes())
            throw WeightMismatch(name, "expected shape " + shape_str(dst.sizes()) + ", archive has " +
                                           shape_str(src->sizes()));
        dst.copy_(src->to(dst.scalar_type()));
    };
    for (auto& p : model->encoder()->named_parameters()) assign(p.key(), p.value(), false);
    for (auto& b : model->encoder()->named_buffers())
        assign(b.key(), b.value(), b.key().ends_with("num_batches_tracked"));
}

std::vector<std::pair<std::string, std::vector<std::int64_t>>> encoder_signature(UNet& model) {
    std::vector<std::pair<std::string, std::vector<std::int64_t>>> out;
    for (const auto& p : model->encoder()->named_parameters())
        out.emplace_back(p.key(), p.value().sizes().vec());
    for (const auto& b : model->encoder()->named_buffers())
        out.emplace_back(b.key(), b.value().sizes().vec());
    return out;
}

std::array<std::int64_t, 5> encoder_stage_channels(UNet& model) {
    const auto params = model->encoder()->named_parameters();
    auto out_channels = [&](const std::string& name) { return params[name].size(0); };
    return {out_channels("bn1.weight"), out_channels("layer1.2.bn2.weight"),
            out_channels("layer2.3.bn2.weight"), out_channels("layer3.5.bn2.weight"),
            out_channels("layer4.2.bn2.weight")};
}

// ---------------------------------------------------------------------------

torch::Tensor example_input(const TrainingExample& ex) {
    return torch::from_blob(const_cast<float*>(ex.input.data()), {1, 3, ex.height(), ex.width()},
                            torch::kFloat)
        .clone();
}

Batch collate(std::span<const TrainingExample> examples) {
    if (examples.empty()) throw InvalidArgument("collate: empty batch");
    const auto b = static_cast<std::int64_t>(examples.size());
    const int h = examples[0].height(), w = examples[0].width();
    Batch out{torch::empty({b, 3, h, w}, torch::kFloat), torch::empty({b, h, w}, torch::kLong)};
    auto* in = out.input.data_ptr<float>();
    auto* tg = out.target.data_ptr<std::int64_t>();
    const std::size_t plane = std::size_t(h) * std::size_t(w);
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const auto& ex = examples[i];
        if (ex.height() != h || ex.width() != w || ex.target.size() != Size{w, h})
            throw DimensionMismatch("collate: examples differ in size");
        std::copy(ex.input.begin(), ex.input.end(), in + i * 3 * plane);
        const auto lab = ex.target.labels.pixels();
        std::copy(lab.begin(), lab.end(), tg + i * plane);
    }
    return out;
}

std::vector<ClassMap> argmax_maps(const torch::Tensor& logits) {
    const auto idx = logits.argmax(1).to(torch::kUInt8).contiguous();
    std::vector<ClassMap> out;
    const int h = static_cast<int>(idx.size(1)), w = static_cast<int>(idx.size(2));
    const std::size_t plane = std::size_t(h) * std::size_t(w);
    const auto* p = idx.data_ptr<std::uint8_t>();
    for (std::int64_t b = 0; b < idx.size(0); ++b)
        out.emplace_back(Raster<std::uint8_t>(w, h, std::vector<std::uint8_t>(p + b * plane, p + (b + 1) * plane)));
    return out;
}

ClassMap predict(UNet& model, const M11Image& img) {
    const Size net = model->spec().input_size;
    M11Image norm = normalize_m11(img);
    TrainingExample ex;
    ex.intensity = resize_bilinear(norm.pixels, net);
    standardize(ex);

    const bool was_training = model->is_training();
    model->eval();
    torch::NoGradGuard no_grad;
    const auto logits = model->forward(example_input(ex));
    if (was_training) model->train();

    ClassMap map = argmax_maps(logits).front();
    Size back = img.original_size;
    if (back.width <= 0 || back.height <= 0) back = img.size();
    return resize_mask(map, back);
}

// ---------------------------------------------------------------------------

std::vector<std::pair<std::string, torch::Tensor>> model_state(UNet& model) {
    std::vector<std::pair<std::string, torch::Tensor>> out;
    for (const auto& p : model->named_parameters()) out.emplace_back(p.key(), p.value());
    for (const auto& b : model->named_buffers()) out.emplace_back(b.key(), b.value());
    return out;
}

void load_model_state(UNet& model, const std::vector<std::pair<std::string, torch::Tensor>>& state) {
    torch::NoGradGuard no_grad;
    auto params = model->named_parameters();
    auto buffers = model->named_buffers();
    std::size_t matched = 0;
    for (const auto& [name, t] : state) {
        torch::Tensor* dst = params.find(name);
        if (!dst) dst = buffers.find(name);
        if (!dst) throw WeightMismatch(name, "not a tensor of this model");
        if (dst->sizes() != t.sizes())
            throw WeightMismatch(name, "expected shape " + shape_str(dst->sizes()) + ", got " +
                                           shape_str(t.sizes()));
        dst->copy_(t.to(dst->scalar_type()));
        ++matched;
    }
    if (matched != params.size() + buffers.size())
        throw WeightMismatch("<model>", "state covers " + std::to_string(matched) + " of " +
                                            std::to_string(params.size() + buffers.size()) + " tensors");
}

void save_checkpoint(const std::filesystem::path& path, UNet& model, const CheckpointMeta& meta) {
    WeightArchive archive;
    archive.header = {{"model_spec", model->spec()},
                      {"epoch", meta.epoch},
                      {"val_loss", meta.val_loss},
                      {"seed", meta.seed}};
    archive.tensors = model_state(model);
    save_weights(path, archive);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    const WeightArchive archive = load_weights(path);
    if (!archive.header.contains("model_spec"))
        throw CorruptFile("checkpoint '" + path.string() + "' has no model_spec header");
    ModelSpec spec = archive.header.at("model_spec").get<ModelSpec>();
    spec.pretrained = false;  // weights come from the checkpoint itself
    LoadedCheckpoint out;
    out.model = build(spec, archive.header.value("seed", std::uint64_t{0}));
    load_model_state(out.model, archive.tensors);
    out.meta.epoch = archive.header.value("epoch", 0);
    out.meta.val_loss = archive.header.value("val_loss", 0.0);
    out.meta.seed = archive.header.value("seed", std::uint64_t{0});
    out.model->eval();
    return out;
}

}  // namespace m11seg
