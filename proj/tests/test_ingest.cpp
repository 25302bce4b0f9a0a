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

#include <gtest/gtest.h>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <fstream>
#include <random>
#include <set>

#include "m11seg/error.hpp"
#include "m11seg/ingest.hpp"
#include "test_util.hpp"

namespace m11seg {
namespace {

using testing::TempDir;

M11Image image_from(int w, int h, std::initializer_list<float> values) {
    M11Image img;
    img.pixels = Raster<float>(w, h);
    std::copy(values.begin(), values.end(), img.pixels.pixels().begin());
    img.original_size = img.size();
    return img;
}

TEST(Normalize, MinMaxMapsToUnitRange) {
    const M11Image out = normalize_m11(image_from(2, 2, {10, 20, 30, 50}));
    EXPECT_FLOAT_EQ(out.pixels(0, 0), 0.0f);
    EXPECT_FLOAT_EQ(out.pixels(1, 0), 0.25f);
    EXPECT_FLOAT_EQ(out.pixels(0, 1), 0.5f);
    EXPECT_FLOAT_EQ(out.pixels(1, 1), 1.0f);
}

TEST(Normalize, ConstantImageIsAllZero) {
    const M11Image out = normalize_m11(image_from(2, 2, {7, 7, 7, 7}));
    for (float v : out.pixels.pixels()) EXPECT_EQ(v, 0.0f);
}

TEST(Normalize, EmptyImageThrows) {
    EXPECT_THROW(normalize_m11(M11Image{}), InvalidArgument);
}

TEST(Normalize, PercentileClipSaturatesOutliers) {
    M11Image img;
    img.pixels = Raster<float>(101, 1);
    for (int i = 0; i <= 100; ++i) img.pixels(i, 0) = float(i);
    img.pixels(100, 0) = 1e6f;
    const M11Image out = normalize_m11(img, {.clip_percentile = 1.0});
    EXPECT_FLOAT_EQ(out.pixels(0, 0), 0.0f);
    EXPECT_FLOAT_EQ(out.pixels(100, 0), 1.0f);
    EXPECT_NEAR(out.pixels(50, 0), (50.0 - 1.0) / (99.0 - 1.0), 1e-6);
}

TEST(Normalize, RandomImagesSpanExactlyZeroToOne) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> d(-100.0f, 5000.0f);
    for (int trial = 0; trial < 50; ++trial) {
        M11Image img;
        img.pixels = Raster<float>(13, 7);
        for (auto& v : img.pixels.pixels()) v = d(rng);
        const M11Image out = normalize_m11(img);
        const auto& px = out.pixels.pixels();
        EXPECT_EQ(*std::min_element(px.begin(), px.end()), 0.0f);
        EXPECT_EQ(*std::max_element(px.begin(), px.end()), 1.0f);
    }
}

TEST(Resize, BilinearStaysInsideInputEnvelope) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<float> d(0.0f, 1.0f);
    std::uniform_int_distribution<int> side(1, 40);
    for (int trial = 0; trial < 200; ++trial) {
        Raster<float> src(side(rng), side(rng));
        for (auto& v : src.pixels()) v = d(rng);
        const auto [mn, mx] = std::minmax_element(src.pixels().begin(), src.pixels().end());
        const Size target{side(rng), side(rng)};
        const Raster<float> out = resize_bilinear(src, target);
        ASSERT_EQ(out.size(), target);
        for (float v : out.pixels()) {
            EXPECT_GE(v, *mn);
            EXPECT_LE(v, *mx);
        }
    }
}

TEST(Resize, BilinearIdentityAtSameSize) {
    Raster<float> src(5, 3);
    for (std::size_t i = 0; i < src.pixel_count(); ++i) src.pixels()[i] = float(i);
    EXPECT_EQ(resize_bilinear(src, src.size()), src);
}

TEST(Resize, BilinearHalvingAveragesPixelPairs) {
    Raster<float> src(4, 1);
    std::vector<float> v{0, 2, 4, 6};
    std::copy(v.begin(), v.end(), src.pixels().begin());
    const auto out = resize_bilinear(src, {2, 1});
    EXPECT_FLOAT_EQ(out(0, 0), 1.0f);
    EXPECT_FLOAT_EQ(out(1, 0), 5.0f);
}

TEST(Resize, NearestNeverInventsLabels) {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> side(1, 40);
    std::uniform_int_distribution<int> maxl(0, 3);
    for (int trial = 0; trial < 200; ++trial) {
        const ClassMap m = testing::random_classmap(rng, side(rng), side(rng), maxl(rng));
        const std::set<std::uint8_t> in(m.labels.pixels().begin(), m.labels.pixels().end());
        const ClassMap out = resize_mask(m, {side(rng), side(rng)});
        for (auto v : out.labels.pixels()) EXPECT_TRUE(in.count(v));
    }
}

TEST(Resize, TwoByTwoToOneUsesHalfPixelCenter) {
    ClassMap m(2, 2);
    m.labels(0, 0) = 0;
    m.labels(1, 0) = 1;
    m.labels(0, 1) = 2;
    m.labels(1, 1) = 3;
    EXPECT_EQ(resize_mask(m, {1, 1}).labels(0, 0), 3);
}

TEST(Resize, UpscaleByTwoReplicatesEachLabel) {
    ClassMap m(2, 1);
    m.labels(0, 0) = 1;
    m.labels(1, 0) = 2;
    const ClassMap out = resize_mask(m, {4, 2});
    for (int y = 0; y < 2; ++y) {
        EXPECT_EQ(out.labels(0, y), 1);
        EXPECT_EQ(out.labels(1, y), 1);
        EXPECT_EQ(out.labels(2, y), 2);
        EXPECT_EQ(out.labels(3, y), 2);
    }
}

TEST(Resize, NonPositiveTargetThrows) {
    Raster<float> src(2, 2, 0.0f);
    EXPECT_THROW(resize_bilinear(src, {0, 2}), InvalidArgument);
    EXPECT_THROW(resize_mask(ClassMap(2, 2), {2, -1}), InvalidArgument);
}

TEST(Resize, ImageKeepsMetadataAndOriginalSize) {
    M11Image img = image_from(2, 2, {0, 1, 2, 3});
    img.sample_id = "s1";
    img.acquisition_day = 4;
    const M11Image out = resize_image(img, {8, 6});
    EXPECT_EQ(out.size(), (Size{8, 6}));
    EXPECT_EQ(out.original_size, (Size{2, 2}));
    EXPECT_EQ(out.sample_id, "s1");
    EXPECT_EQ(out.acquisition_day, 4);
}

TEST(LoadM11, SixteenBitRoundTrip) {
    TempDir dir;
    Raster<float> counts(6, 4);
    for (std::size_t i = 0; i < counts.pixel_count(); ++i) counts.pixels()[i] = float(i * 1000);
    write_m11_tiff16(dir / "a.tif", counts);
    const M11Image img = load_m11(dir / "a.tif");
    EXPECT_EQ(img.pixels, counts);
    EXPECT_EQ(img.original_size, (Size{6, 4}));
    EXPECT_EQ(img.sample_id, "a");
}

TEST(LoadM11, EightBitAndFloatAccepted) {
    TempDir dir;
    cv::Mat u8(3, 2, CV_8U, cv::Scalar(200));
    ASSERT_TRUE(cv::imwrite((dir / "u8.tif").string(), u8));
    EXPECT_EQ(load_m11(dir / "u8.tif").pixels(1, 2), 200.0f);
    cv::Mat f32(3, 2, CV_32F, cv::Scalar(0.25));
    ASSERT_TRUE(cv::imwrite((dir / "f32.tif").string(), f32));
    EXPECT_EQ(load_m11(dir / "f32.tif").pixels(0, 0), 0.25f);
}

TEST(LoadM11, ErrorsAreDistinct) {
    TempDir dir;
    EXPECT_THROW(load_m11(dir / "missing.tif"), FileNotFound);

    cv::Mat rgb(4, 4, CV_8UC3, cv::Scalar(1, 2, 3));
    ASSERT_TRUE(cv::imwrite((dir / "rgb.tif").string(), rgb));
    try {
        load_m11(dir / "rgb.tif");
        FAIL() << "expected MultiChannelInput";
    } catch (const MultiChannelInput& e) {
        EXPECT_NE(std::string(e.what()).find("multi-channel input"), std::string::npos);
    }

    std::ofstream(dir / "junk.tif") << "this is not a raster";
    EXPECT_THROW(load_m11(dir / "junk.tif"), UnreadableFormat);

    cv::Mat f64(2, 2, CV_64F, cv::Scalar(1.0));
    if (cv::imwrite((dir / "f64.tif").string(), f64)) EXPECT_THROW(load_m11(dir / "f64.tif"), UnreadableFormat);
}

TEST(LoadSample, SidecarSuppliesMetadata) {
    TempDir dir;
    write_m11_tiff16(dir / "img" / "x.tif", Raster<float>(3, 3, 5.0f));
    std::ofstream(dir / "x.json") << R"({"sample_id": "mouse7", "acquisition_day": 18, "image_path": "img/x.tif"})";
    const M11Image img = load_sample(dir / "x.json");
    EXPECT_EQ(img.sample_id, "mouse7");
    EXPECT_EQ(img.acquisition_day, 18);
    EXPECT_EQ(img.width(), 3);

    std::ofstream(dir / "bad.json") << R"({"sample_id": "m", "acquisition_day": 19, "image_path": "img/x.tif"})";
    EXPECT_THROW(load_sample(dir / "bad.json"), InvalidArgument);
    std::ofstream(dir / "broken.json") << "{";
    EXPECT_THROW(load_sample(dir / "broken.json"), CorruptFile);
    EXPECT_THROW(load_sample(dir / "none.json"), FileNotFound);
}

}  // namespace
}  // namespace m11seg
