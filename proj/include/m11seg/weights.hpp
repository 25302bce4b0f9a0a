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

/// @file weights.hpp
/// Flat name -> tensor archive used for pretrained encoders and checkpoints.
///
/// Layout (little-endian):
///
///     char[8]  magic "M11SEGW1"
///     u64      header length, then that many bytes of UTF-8 JSON
///     u64      tensor count
///     per tensor:
///       u64 name length, name bytes
///       u8  dtype (0 = float32, 1 = int64)
///       u8  rank, then rank x i64 dims
///       raw element data, row-major
///
/// Encoder tensors use torchvision's ResNet-34 state_dict names verbatim
/// (conv1.weight, bn1.running_mean, layer3.4.conv2.weight,
/// layer2.0.downsample.1.bias, ...); the fc.* classifier is not stored.
/// tools/convert_resnet34_weights.py produces such a file from a torchvision
/// checkpoint.

#ifndef M11SEG_WEIGHTS_HPP
#define M11SEG_WEIGHTS_HPP

#include <torch/torch.h>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace m11seg {

struct WeightArchive {
    nlohmann::json header = nlohmann::json::object();
    std::vector<std::pair<std::string, torch::Tensor>> tensors;

    const torch::Tensor* find(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name) return &t;
        return nullptr;
    }
};

void save_weights(const std::filesystem::path& path, const WeightArchive& archive);
/// Throws FileNotFound or CorruptFile.
WeightArchive load_weights(const std::filesystem::path& path);

}  // namespace m11seg

#endif  // M11SEG_WEIGHTS_HPP
