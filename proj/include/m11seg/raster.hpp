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

/// @file raster.hpp
/// Dense row-major 2-D rasters and the label types built on them.

#ifndef M11SEG_RASTER_HPP
#define M11SEG_RASTER_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "m11seg/error.hpp"

namespace m11seg {

struct Size {
    int width = 0;
    int height = 0;

    friend bool operator==(const Size&, const Size&) = default;
};

/// Row-major raster; pixel (x, y) lives at index y * width + x.
template <typename T>
class Raster {
public:
    using value_type = T;

    Raster() = default;
    Raster(int width, int height, T fill = T{})
        : width_(width), height_(height),
          data_(static_cast<std::size_t>(checked_count(width, height)), fill) {}
    Raster(int width, int height, std::vector<T> data)
        : width_(width), height_(height), data_(std::move(data)) {
        if (data_.size() != static_cast<std::size_t>(checked_count(width, height)))
            throw InvalidArgument("raster data size does not match dimensions");
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    Size size() const noexcept { return {width_, height_}; }
    std::size_t pixel_count() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(int x, int y) noexcept { return data_[index(x, y)]; }
    const T& operator()(int x, int y) const noexcept { return data_[index(x, y)]; }

    std::span<T> pixels() noexcept { return data_; }
    std::span<const T> pixels() const noexcept { return data_; }
    std::vector<T>& storage() noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    friend bool operator==(const Raster&, const Raster&) = default;

private:
    static long long checked_count(int width, int height) {
        if (width < 0 || height < 0)
            throw InvalidArgument("raster dimensions must be non-negative");
        return static_cast<long long>(width) * height;
    }
    std::size_t index(int x, int y) const noexcept {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(x);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<T> data_;
};

/// Anatomical structures annotated as separate binary masks.
enum class Structure : std::uint8_t { tissue = 1, os = 2, vaginal_wall = 3 };

inline constexpr int kNumClasses = 4;
inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "background", "tissue", "os", "vaginal_wall"};

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Display palette indexed by class id: black, blue, green, red.
inline constexpr std::array<Rgb, kNumClasses> kClassPalette = {
    Rgb{0, 0, 0}, Rgb{0, 0, 255}, Rgb{0, 255, 0}, Rgb{255, 0, 0}};

inline std::string_view structure_name(Structure s) {
    return kClassNames[static_cast<std::size_t>(s)];
}

inline Structure parse_structure(std::string_view name) {
    if (name == "tissue") return Structure::tissue;
    if (name == "os") return Structure::os;
    if (name == "vaginal_wall" || name == "vaginal") return Structure::vaginal_wall;
    throw InvalidArgument("unknown structure '" + std::string(name) + "'");
}

/// Per-pixel class labels in {0, 1, 2, 3}.
struct ClassMap {
    Raster<std::uint8_t> labels;

    ClassMap() = default;
    explicit ClassMap(Raster<std::uint8_t> l) : labels(std::move(l)) {}
    ClassMap(int width, int height, std::uint8_t fill = 0) : labels(width, height, fill) {}

    int width() const noexcept { return labels.width(); }
    int height() const noexcept { return labels.height(); }
    Size size() const noexcept { return labels.size(); }
    std::uint8_t operator()(int x, int y) const noexcept { return labels(x, y); }
    std::uint8_t& operator()(int x, int y) noexcept { return labels(x, y); }

    /// Throws if any label falls outside {0..3}.
    void validate() const {
        for (auto v : labels.pixels())
            if (v >= kNumClasses)
                throw InvalidLabel("label " + std::to_string(v) + " outside {0,1,2,3}");
    }

    friend bool operator==(const ClassMap&, const ClassMap&) = default;
};

/// Binary indicator of one structure, values in {0, 1}.
struct BinaryMask {
    Raster<std::uint8_t> pixels;
    Structure structure = Structure::tissue;

    BinaryMask() = default;
    BinaryMask(int width, int height, Structure s) : pixels(width, height, 0), structure(s) {}
    BinaryMask(Raster<std::uint8_t> p, Structure s) : pixels(std::move(p)), structure(s) {}

    int width() const noexcept { return pixels.width(); }
    int height() const noexcept { return pixels.height(); }
    Size size() const noexcept { return pixels.size(); }

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

}  // namespace m11seg

#endif  // M11SEG_RASTER_HPP
