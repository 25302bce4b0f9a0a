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

#include "m11seg/png_io.hpp"

#include <png.h>

#include <atomic>
#include <cstring>
#include <fstream>
#include <random>
#include <system_error>

#include "m11seg/maskops.hpp"

namespace m11seg {
namespace {

struct WriteState {
    std::vector<std::uint8_t>* out;
};

void write_callback(png_structp png, png_bytep data, png_size_t length) {
    auto* st = static_cast<WriteState*>(png_get_io_ptr(png));
    st->out->insert(st->out->end(), data, data + length);
}

void flush_callback(png_structp) {}

struct ReadState {
    std::span<const std::uint8_t> bytes;
    std::size_t offset = 0;
};

void read_callback(png_structp png, png_bytep data, png_size_t length) {
    auto* st = static_cast<ReadState*>(png_get_io_ptr(png));
    if (st->offset + length > st->bytes.size()) png_error(png, "truncated PNG stream");
    std::memcpy(data, st->bytes.data() + st->offset, length);
    st->offset += length;
}

void error_callback(png_structp png, png_const_charp msg) {
    auto* buf = static_cast<std::string*>(png_get_error_ptr(png));
    if (buf) *buf = msg;
    png_longjmp(png, 1);
}

void warning_callback(png_structp, png_const_charp) {}

// color_type: PNG_COLOR_TYPE_{GRAY,PALETTE,RGB}; rows point at tightly packed data.
std::vector<std::uint8_t> encode(int width, int height, int color_type, int channels,
                                 const std::uint8_t* data, std::span<const Rgb> palette) {
    if (width <= 0 || height <= 0) throw InvalidArgument("cannot encode an empty PNG");
    std::string err;
    png_structp png =
        png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, error_callback, warning_callback);
    if (!png) throw Error("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    std::vector<std::uint8_t> out;
    WriteState st{&out};
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    std::vector<png_color> pal;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error("PNG encode failed: " + err);
    }
    png_set_write_fn(png, &st, write_callback, flush_callback);
    png_set_IHDR(png, info, png_uint_32(width), png_uint_32(height), 8, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    if (color_type == PNG_COLOR_TYPE_PALETTE) {
        for (const auto& c : palette) pal.push_back(png_color{c.r, c.g, c.b});
        png_set_PLTE(png, info, pal.data(), static_cast<int>(pal.size()));
    }
    const std::size_t stride = std::size_t(width) * std::size_t(channels);
    for (int y = 0; y < height; ++y)
        rows[std::size_t(y)] = const_cast<png_bytep>(data + std::size_t(y) * stride);
    png_set_rows(png, info, rows.data());
    png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

}  // namespace

std::vector<std::uint8_t> encode_png_gray8(const Raster<std::uint8_t>& img) {
    return encode(img.width(), img.height(), PNG_COLOR_TYPE_GRAY, 1, img.storage().data(), {});
}

std::vector<std::uint8_t> encode_png_indexed(const Raster<std::uint8_t>& indices,
                                             std::span<const Rgb> palette) {
    if (palette.empty() || palette.size() > 256) throw InvalidArgument("palette size must be 1..256");
    for (auto v : indices.pixels())
        if (v >= palette.size()) throw InvalidLabel("index outside palette");
    return encode(indices.width(), indices.height(), PNG_COLOR_TYPE_PALETTE, 1,
                  indices.storage().data(), palette);
}

std::vector<std::uint8_t> encode_png_rgb(const RgbImage& img) {
    static_assert(sizeof(Rgb) == 3);
    if (img.pixels.size() != std::size_t(img.width) * std::size_t(img.height))
        throw InvalidArgument("RGB image size mismatch");
    return encode(img.width, img.height, PNG_COLOR_TYPE_RGB, 3,
                  reinterpret_cast<const std::uint8_t*>(img.pixels.data()), {});
}

DecodedPng decode_png(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0)
        throw CorruptFile("not a PNG stream");
    std::string err;
    png_structp png =
        png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, error_callback, warning_callback);
    if (!png) throw Error("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    ReadState st{bytes, 0};
    DecodedPng out;
    std::vector<png_bytep> rows;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw CorruptFile("PNG decode failed: " + err);
    }
    png_set_read_fn(png, &st, read_callback);
    png_read_info(png, info);
    const auto color_type = png_get_color_type(png, info);
    const auto depth = png_get_bit_depth(png, info);
    out.paletted = color_type == PNG_COLOR_TYPE_PALETTE;
    if (depth == 16) png_set_strip_16(png);
    if (depth < 8) png_set_packing(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && depth < 8 && depth > 1)
        png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);

    out.width = static_cast<int>(png_get_image_width(png, info));
    out.height = static_cast<int>(png_get_image_height(png, info));
    out.channels = png_get_channels(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    out.samples.resize(stride * std::size_t(out.height));
    rows.resize(std::size_t(out.height));
    for (int y = 0; y < out.height; ++y) rows[std::size_t(y)] = out.samples.data() + stride * std::size_t(y);
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileNotFound("cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    static std::atomic<unsigned> counter{0};
    thread_local std::mt19937 gen{std::random_device{}()};
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp." + std::to_string(gen()) + "." + std::to_string(counter++);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write '" + tmp.string() + "'");
        out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
        out.flush();
        if (!out) throw Error("short write to '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw Error("cannot rename onto '" + path.string() + "': " + ec.message());
    }
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
    write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// ClassMap and BinaryMask file formats live here because both are PNG-backed.

void encode_classmap(const ClassMap& map, const std::filesystem::path& path) {
    map.validate();
    write_file_atomic(path, encode_png_indexed(map.labels, kClassPalette));
}

ClassMap decode_classmap(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw FileNotFound("no class map at '" + path.string() + "'");
    const auto png = decode_png(read_file_bytes(path));
    if (png.channels != 1)
        throw CorruptFile("class map '" + path.string() + "' is not single-channel");
    ClassMap map(Raster<std::uint8_t>(png.width, png.height, png.samples));
    map.validate();
    return map;
}

void encode_binary_mask(const BinaryMask& mask, const std::filesystem::path& path) {
    Raster<std::uint8_t> gray(mask.width(), mask.height());
    auto dst = gray.pixels();
    const auto src = mask.pixels.pixels();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        if (src[i] > 1) throw InvalidLabel("binary mask value outside {0,1}");
        dst[i] = src[i] ? 255 : 0;
    }
    write_file_atomic(path, encode_png_gray8(gray));
}

BinaryMask decode_binary_mask(const std::filesystem::path& path, Structure s) {
    if (!std::filesystem::exists(path)) throw FileNotFound("no mask at '" + path.string() + "'");
    const auto png = decode_png(read_file_bytes(path));
    if (png.channels != 1) throw CorruptFile("mask '" + path.string() + "' is not single-channel");
    BinaryMask mask(png.width, png.height, s);
    auto dst = mask.pixels.pixels();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        const auto v = png.samples[i];
        if (v != 0 && v != 255 && v != 1)
            throw InvalidLabel("mask '" + path.string() + "' has value " + std::to_string(v));
        dst[i] = v ? 1 : 0;
    }
    return mask;
}

}  // namespace m11seg
