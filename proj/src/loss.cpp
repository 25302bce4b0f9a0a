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

#include "m11seg/loss.hpp"

#include "m11seg/error.hpp"

namespace m11seg {
namespace {

void check(const torch::Tensor& logits, const torch::Tensor& target) {
    if (logits.dim() != 4 || target.dim() != 3 || logits.size(0) != target.size(0) ||
        logits.size(2) != target.size(1) || logits.size(3) != target.size(2))
        throw DimensionMismatch("loss expects logits B x C x H x W and target B x H x W");
    if (target.numel() == 0) throw InvalidArgument("loss on an empty batch");
    if (!c10::isIntegralType(target.scalar_type(), /*includeBool=*/false))
        throw InvalidArgument("loss target must hold integer labels");
    const auto lo = target.min().item<std::int64_t>();
    const auto hi = target.max().item<std::int64_t>();
    if (lo < 0 || hi >= logits.size(1))
        throw InvalidLabel("loss target label outside [0, " + std::to_string(logits.size(1)) + ")");
}

}  // namespace

torch::Tensor ce_loss(const torch::Tensor& logits, const torch::Tensor& target) {
    check(logits, target);
    const auto logp = torch::log_softmax(logits, 1);
    return -logp.gather(1, target.to(torch::kLong).unsqueeze(1)).mean();
}

torch::Tensor dice_loss(const torch::Tensor& logits, const torch::Tensor& target, const DiceOptions& opts) {
    check(logits, target);
    const auto classes = logits.size(1);
    const auto probs = torch::softmax(logits, 1);
    const auto onehot = torch::one_hot(target.to(torch::kLong), classes).permute({0, 3, 1, 2}).to(probs.dtype());
    const std::vector<std::int64_t> dims{0, 2, 3};
    const auto inter = (probs * onehot).sum(dims);
    const auto denom = probs.sum(dims) + onehot.sum(dims);
    auto score = (2.0 * inter + opts.smooth) / (denom + opts.smooth);
    if (!opts.include_background) score = score.slice(0, 1);
    return 1.0 - score.mean();
}

torch::Tensor total_loss(const torch::Tensor& logits, const torch::Tensor& target, const LossWeights& weights,
                         const DiceOptions& dice) {
    if (weights.ce < 0 || weights.dice < 0) throw InvalidArgument("loss weights must be non-negative");
    if (weights.dice == 0.0) return weights.ce * ce_loss(logits, target);
    if (weights.ce == 0.0) return weights.dice * dice_loss(logits, target, dice);
    return weights.ce * ce_loss(logits, target) + weights.dice * dice_loss(logits, target, dice);
}

}  // namespace m11seg
