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

#ifndef M11SEG_LOSS_HPP
#define M11SEG_LOSS_HPP

#include <torch/torch.h>

namespace m11seg {

struct DiceOptions {
    double smooth = 1.0;              // added to numerator and denominator
    bool include_background = true;   // average over all four classes
};

struct LossWeights {
    double ce = 0.5;
    double dice = 0.5;
};

/// Mean over pixels of -log softmax(logits)[true class].
/// logits: B x C x H x W; target: B x H x W integer labels in [0, C).
torch::Tensor ce_loss(const torch::Tensor& logits, const torch::Tensor& target);

/// 1 - mean_c (2 sum p_c g_c + eps) / (sum p_c + sum g_c + eps), sums over the
/// whole batch; p = softmax(logits), g = one-hot(target).
torch::Tensor dice_loss(const torch::Tensor& logits, const torch::Tensor& target,
                        const DiceOptions& opts = {});

/// weights.ce * CE + weights.dice * Dice.
torch::Tensor total_loss(const torch::Tensor& logits, const torch::Tensor& target,
                         const LossWeights& weights = {}, const DiceOptions& dice = {});

}  // namespace m11seg

#endif  // M11SEG_LOSS_HPP
