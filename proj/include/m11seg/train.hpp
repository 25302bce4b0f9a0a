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

/// @file train.hpp
/// AdamW training with the combined CE + Dice loss and best-on-validation
/// checkpointing.

#ifndef M11SEG_TRAIN_HPP
#define M11SEG_TRAIN_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "m11seg/dataset.hpp"
#include "m11seg/loss.hpp"
#include "m11seg/model.hpp"

namespace m11seg {

struct TrainConfig {
    double lr = 1e-4;
    double weight_decay = 1e-5;
    int batch_size = 8;
    int epochs = 50;
    LossWeights loss_weights{0.5, 0.5};
    double dice_smooth = 1.0;
    bool dice_include_background = true;
    std::uint64_t seed = 0;
    /// bfloat16 autocast on CPU; off by default.
    bool mixed_precision = false;
    bool augment = true;

    void validate() const;
    DiceOptions dice() const { return {dice_smooth, dice_include_background}; }
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct EpochRecord {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    double train_pixel_acc = 0.0;
    double val_pixel_acc = 0.0;
    double seconds = 0.0;
};

struct FitOptions {
    /// Receives best.m11w, curves.csv and curves.svg when set.
    std::optional<std::filesystem::path> output_dir;
    std::function<void(const EpochRecord&)> on_epoch;
    bool verbose = false;
};

struct FitResult {
    std::vector<EpochRecord> curves;
    int best_epoch = 0;
    double best_val_loss = 0.0;
    std::optional<std::filesystem::path> checkpoint_path;
};

/// Runs cfg.epochs epochs; returns with the model holding the weights of the
/// minimum-validation-loss epoch (earliest on ties). Throws TrainingError with
/// epoch and batch index when a loss goes non-finite.
FitResult fit(UNet& model, const std::vector<TrainingExample>& train,
              const std::vector<TrainingExample>& val, const TrainConfig& cfg,
              const FitOptions& opts = {});

/// Loads the manifest's train and val splits (paths relative to data_root) and fits.
FitResult fit(UNet& model, const SplitManifest& manifest, const std::filesystem::path& data_root,
              const TrainConfig& cfg, const FitOptions& opts = {});

/// Loss and pooled pixel accuracy over a set, in inference mode.
struct EvalPass {
    double loss = 0.0;
    double pixel_acc = 0.0;
};
EvalPass evaluate_loss(UNet& model, const std::vector<TrainingExample>& set, const TrainConfig& cfg);

/// Image and ground-truth labels for a record; labels come from classmap_path
/// when present, else from compositing the per-structure masks.
std::pair<M11Image, ClassMap> load_record(const SampleRecord& r, const std::filesystem::path& data_root);

std::vector<TrainingExample> load_examples(const SplitManifest& manifest, const std::filesystem::path& data_root,
                                           Split split, Size input_size = kNetworkInput);

std::string curves_csv(const std::vector<EpochRecord>& curves, std::uint64_t seed);
/// Two panels: combined loss (left) and pixel accuracy (right), train vs val.
std::string curves_svg(const std::vector<EpochRecord>& curves);

}  // namespace m11seg

#endif  // M11SEG_TRAIN_HPP
