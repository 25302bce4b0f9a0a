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

/// @file model.hpp
/// U-Net with a ResNet-34 encoder.
///
/// Encoder stages (stride, channels): relu(bn1(conv1)) at 2/64, layer1 at 4/64,
/// layer2 at 8/128, layer3 at 16/256, layer4 at 32/512. The decoder runs five
/// blocks of bilinear 2x upsample -> concat skip -> 2 x (conv3x3-BN-ReLU); the
/// first four take layer3, layer2, layer1 and the stem as skips, the fifth
/// (256 -> 512) has none. A 1x1 convolution projects to class logits.

#ifndef M11SEG_MODEL_HPP
#define M11SEG_MODEL_HPP

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "m11seg/dataset.hpp"
#include "m11seg/ingest.hpp"
#include "m11seg/raster.hpp"
#include "m11seg/weights.hpp"

namespace m11seg {

inline constexpr std::array<int, 5> kResNet34Channels = {64, 64, 128, 256, 512};
inline constexpr std::array<int, 4> kResNet34Blocks = {3, 4, 6, 3};

struct ModelSpec {
    std::array<int, 5> encoder_channels = kResNet34Channels;
    std::array<int, 5> decoder_channels = {256, 128, 64, 32, 16};
    int num_classes = kNumClasses;
    Size input_size = kNetworkInput;
    bool pretrained = false;
    std::optional<std::filesystem::path> weights_path;
    /// Keep encoder batch-norm statistics and affine parameters fixed while training.
    bool freeze_encoder_bn = false;

    void validate() const;
};

void to_json(nlohmann::json& j, const ModelSpec& s);
void from_json(const nlohmann::json& j, ModelSpec& s);

struct StageShape {
    std::int64_t channels = 0;
    std::int64_t height = 0;
    std::int64_t width = 0;
    friend bool operator==(const StageShape&, const StageShape&) = default;
};

/// Encoder output shapes at strides 2, 4, 8, 16, 32 plus each decoder output.
struct FeaturePyramid {
    std::vector<StageShape> stages;
    std::vector<StageShape> decoder;
    std::vector<std::int64_t> decoder_inputs;  // channels entering each block after concat

    const StageShape& bottleneck() const { return stages.back(); }
};

class BasicBlockImpl : public torch::nn::Module {
public:
    BasicBlockImpl(int in, int out, int stride);
    torch::Tensor forward(const torch::Tensor& x);

private:
    torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
    torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr};
    torch::nn::Sequential downsample{nullptr};
};
TORCH_MODULE(BasicBlock);

class ResNet34EncoderImpl : public torch::nn::Module {
public:
    ResNet34EncoderImpl();
    /// Five feature maps, shallowest first.
    std::vector<torch::Tensor> forward(const torch::Tensor& x);

private:
    torch::nn::Conv2d conv1{nullptr};
    torch::nn::BatchNorm2d bn1{nullptr};
    torch::nn::MaxPool2d maxpool{nullptr};
    std::array<torch::nn::Sequential, 4> layers{nullptr, nullptr, nullptr, nullptr};
};
TORCH_MODULE(ResNet34Encoder);

class DecoderBlockImpl : public torch::nn::Module {
public:
    DecoderBlockImpl(int in, int skip, int out);
    torch::Tensor forward(const torch::Tensor& x, const std::optional<torch::Tensor>& skip);
    int skip_channels() const noexcept { return skip_; }

private:
    int skip_;
    torch::nn::Sequential conv1{nullptr}, conv2{nullptr};
};
TORCH_MODULE(DecoderBlock);

class UNetImpl : public torch::nn::Module {
public:
    explicit UNetImpl(ModelSpec spec);

    /// logits B x num_classes x H x W for a B x 3 x H x W batch at spec.input_size.
    torch::Tensor forward(const torch::Tensor& batch);
    /// Same as forward; records stage shapes into `trace`.
    torch::Tensor forward(const torch::Tensor& batch, FeaturePyramid* trace);

    const ModelSpec& spec() const noexcept { return spec_; }
    ResNet34Encoder& encoder() noexcept { return encoder_; }

    /// Puts the module in training mode, honoring freeze_encoder_bn.
    void train(bool on = true) override;

private:
    ModelSpec spec_;
    ResNet34Encoder encoder_{nullptr};
    std::vector<DecoderBlock> blocks_;
    torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(UNet);

/// Builds the network. Decoder convolutions get He-uniform init and BN (1, 0);
/// with spec.pretrained the encoder is loaded from spec.weights_path.
/// Throws FileNotFound or WeightMismatch naming the offending layer.
UNet build(const ModelSpec& spec, std::uint64_t seed = 0);

/// Copies encoder tensors (torchvision ResNet-34 names) from an archive.
void load_encoder_weights(UNet& model, const WeightArchive& archive);

/// Name -> shape signature of the encoder's parameters and buffers.
std::vector<std::pair<std::string, std::vector<std::int64_t>>> encoder_signature(UNet& model);

/// Channels per encoder stage derived from the weight shapes of stage outputs.
std::array<std::int64_t, 5> encoder_stage_channels(UNet& model);

/// Input tensor 1 x 3 x H x W from a prepared example.
torch::Tensor example_input(const TrainingExample& ex);

struct Batch {
    torch::Tensor input;   // B x 3 x H x W float
    torch::Tensor target;  // B x H x W int64
};
Batch collate(std::span<const TrainingExample> examples);

/// normalize -> resize to the network input -> forward -> argmax -> nearest
/// resize back to the image's original size. Runs in inference mode.
ClassMap predict(UNet& model, const M11Image& img);

/// Per-pixel argmax of B x C x H x W logits into B class maps.
std::vector<ClassMap> argmax_maps(const torch::Tensor& logits);

struct CheckpointMeta {
    int epoch = 0;
    double val_loss = 0.0;
    std::uint64_t seed = 0;
};

/// Weight archive whose header is {model_spec, epoch, val_loss, seed}.
void save_checkpoint(const std::filesystem::path& path, UNet& model, const CheckpointMeta& meta);

struct LoadedCheckpoint {
    UNet model{nullptr};
    CheckpointMeta meta;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Full state (parameters and buffers) by qualified name.
std::vector<std::pair<std::string, torch::Tensor>> model_state(UNet& model);
void load_model_state(UNet& model, const std::vector<std::pair<std::string, torch::Tensor>>& state);

}  // namespace m11seg

#endif  // M11SEG_MODEL_HPP
