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

/// @file png_io.hpp
/// Thin libpng wrappers. Encoders write to memory so the same bytes can be
/// served over HTTP or written atomically to disk.

#ifndef M11SEG_PNG_IO_HPP
#define M11SEG_PNG_IO_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "m11seg/raster.hpp"

namespace m11seg {

struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<Rgb> pixels;  // row-major

    Rgb& at(int x, int y) { return pixels[std::size_t(y) * std::size_t(width) + std::size_t(x)]; }
    const Rgb& at(int x, int y) const {
        return pixels[std::size_t(y) * std::size_t(width) + std::size_t(x)];
    }
    friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// Decoded PNG before interpretation: one byte per sample.
struct DecodedPng {
    int width = 0;
    int height = 0;
    int channels = 0;
    bool paletted = false;
    std::vector<std::uint8_t> samples;
};

std::vector<std::uint8_t> encode_png_gray8(const Raster<std::uint8_t>& img);
std::vector<std::uint8_t> encode_png_indexed(const Raster<std::uint8_t>& indices,
                                             std::span<const Rgb> palette);
std::vector<std::uint8_t> encode_png_rgb(const RgbImage& img);

/// Palette images decode to their raw indices (channels == 1, paletted == true).
/// Throws CorruptFile on malformed input.
DecodedPng decode_png(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

/// Write to a temporary sibling then rename over the destination.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

}  // namespace m11seg

#endif  // M11SEG_PNG_IO_HPP
