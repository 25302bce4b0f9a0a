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

#ifndef M11SEG_TESTS_TEST_UTIL_HPP
#define M11SEG_TESTS_TEST_UTIL_HPP

#include <filesystem>
#include <random>
#include <string>

#include "m11seg/raster.hpp"

namespace m11seg::testing {

/// Fresh directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "m11seg") {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                (tag + "_" + std::to_string(rd()) + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

inline ClassMap random_classmap(std::mt19937_64& rng, int w, int h, int max_label = 3) {
    std::uniform_int_distribution<int> d(0, max_label);
    ClassMap m(w, h);
    for (auto& v : m.labels.pixels()) v = static_cast<std::uint8_t>(d(rng));
    return m;
}

inline BinaryMask random_mask(std::mt19937_64& rng, int w, int h, Structure s, double p = 0.5) {
    std::bernoulli_distribution d(p);
    BinaryMask m(w, h, s);
    for (auto& v : m.pixels.pixels()) v = d(rng) ? 1 : 0;
    return m;
}

}  // namespace m11seg::testing

#endif  // M11SEG_TESTS_TEST_UTIL_HPP
