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

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "m11seg/error.hpp"
#include "m11seg/maskops.hpp"
#include "m11seg/png_io.hpp"
#include "test_util.hpp"

namespace m11seg {
namespace {

using testing::TempDir;

std::uint8_t priority_oracle(bool t, bool o, bool v) {
    if (v) return 3;
    if (o) return 2;
    if (t) return 1;
    return 0;
}

// Classic crossing-number test (W. R. Franklin) at the pixel center.
bool pnpoly(const std::vector<Point>& poly, double x, double y) {
    bool inside = false;
    for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
        if (((poly[i].y > y) != (poly[j].y > y)) &&
            (x < (poly[j].x - poly[i].x) * (y - poly[i].y) / (poly[j].y - poly[i].y) + poly[i].x))
            inside = !inside;
    }
    return inside;
}

std::vector<Point> random_convex_polygon(std::mt19937_64& rng, int canvas) {
    std::uniform_real_distribution<double> c(0.0, canvas);
    std::uniform_real_distribution<double> r(1.0, canvas / 2.0);
    std::uniform_int_distribution<int> n(3, 9);
    const double cx = c(rng), cy = c(rng), rad = r(rng);
    std::uniform_real_distribution<double> ang(0.0, 2.0 * std::numbers::pi);
    std::vector<double> angles(n(rng));
    for (auto& a : angles) a = ang(rng);
    std::sort(angles.begin(), angles.end());
    std::vector<Point> out;
    for (double a : angles) out.push_back({cx + rad * std::cos(a), cy + rad * std::sin(a)});
    return out;
}

TEST(Composite, AllEightCombinationsMatchPriority) {
    for (int bits = 0; bits < 8; ++bits) {
        const bool t = bits & 1, o = bits & 2, v = bits & 4;
        BinaryMask mt(1, 1, Structure::tissue), mo(1, 1, Structure::os), mv(1, 1, Structure::vaginal_wall);
        mt.pixels(0, 0) = t;
        mo.pixels(0, 0) = o;
        mv.pixels(0, 0) = v;
        EXPECT_EQ(composite(mt, mo, mv).labels(0, 0), priority_oracle(t, o, v)) << "bits " << bits;
    }
}

TEST(Composite, RandomTriplesMatchOracle) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto t = testing::random_mask(rng, 16, 16, Structure::tissue);
        const auto o = testing::random_mask(rng, 16, 16, Structure::os);
        const auto v = testing::random_mask(rng, 16, 16, Structure::vaginal_wall);
        const ClassMap m = composite(t, o, v);
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x)
                ASSERT_EQ(m.labels(x, y), priority_oracle(t.pixels(x, y), o.pixels(x, y), v.pixels(x, y)));
    }
}

TEST(Composite, NestedOsInsideTissue) {
    BinaryMask t(5, 5, Structure::tissue), o(5, 5, Structure::os), v(5, 5, Structure::vaginal_wall);
    for (auto& p : t.pixels.pixels()) p = 1;
    o.pixels(2, 2) = 1;
    const ClassMap m = composite(t, o, v);
    EXPECT_EQ(m.labels(2, 2), 2);
    EXPECT_EQ(m.labels(0, 0), 1);
}

TEST(Composite, DimensionMismatchThrows) {
    EXPECT_THROW(composite(BinaryMask(4, 4, Structure::tissue), BinaryMask(4, 5, Structure::os),
                           BinaryMask(4, 4, Structure::vaginal_wall)),
                 DimensionMismatch);
}

TEST(Decompose, RoundTripsAndIndicatesClasses) {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 200; ++trial) {
        const ClassMap m = testing::random_classmap(rng, 9, 7);
        const StructureMasks s = decompose(m);
        EXPECT_EQ(composite(s), m);
        for (std::size_t i = 0; i < m.labels.pixel_count(); ++i) {
            EXPECT_EQ(s.tissue.pixels.pixels()[i], m.labels.pixels()[i] == 1);
            EXPECT_EQ(s.os.pixels.pixels()[i], m.labels.pixels()[i] == 2);
            EXPECT_EQ(s.vaginal_wall.pixels.pixels()[i], m.labels.pixels()[i] == 3);
        }
    }
}

TEST(Decompose, RejectsOutOfRangeLabel) {
    ClassMap m(2, 2);
    m.labels(1, 1) = 4;
    EXPECT_THROW(decompose(m), InvalidLabel);
}

TEST(Rasterize, ConvexPolygonsMatchPointInPolygonOracle) {
    std::mt19937_64 rng(29);
    std::uniform_int_distribution<int> side(4, 32);
    for (int trial = 0; trial < 500; ++trial) {
        const int n = side(rng);
        AnnotationShape s{DrawMode::polygon, random_convex_polygon(rng, n), Structure::os};
        const BinaryMask m = rasterize(s, {n, n});
        ASSERT_EQ(m.size(), (Size{n, n}));
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x)
                ASSERT_EQ(m.pixels(x, y) != 0, pnpoly(s.vertices, x + 0.5, y + 0.5))
                    << "trial " << trial << " pixel " << x << "," << y;
    }
}

TEST(Rasterize, SelfIntersectingUsesEvenOdd) {
    // Pentagram: the inner pentagon is covered twice and stays empty.
    std::vector<Point> star;
    for (int k = 0; k < 5; ++k) {
        const double a = -std::numbers::pi / 2 + k * 4.0 * std::numbers::pi / 5.0;
        star.push_back({16 + 14 * std::cos(a), 16 + 14 * std::sin(a)});
    }
    const BinaryMask m = rasterize({DrawMode::polygon, star, Structure::tissue}, {32, 32});
    EXPECT_EQ(m.pixels(16, 16), 0);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) ASSERT_EQ(m.pixels(x, y) != 0, pnpoly(star, x + 0.5, y + 0.5));
}

TEST(Rasterize, AxisAlignedSquareCoversExactPixels) {
    const BinaryMask m =
        rasterize({DrawMode::polygon, {{1, 1}, {4, 1}, {4, 3}, {1, 3}}, Structure::tissue}, {6, 5});
    int count = 0;
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 6; ++x) {
            const bool in = x >= 1 && x < 4 && y >= 1 && y < 3;
            EXPECT_EQ(m.pixels(x, y) != 0, in);
            count += m.pixels(x, y) != 0;
        }
    EXPECT_EQ(count, 6);
}

TEST(Rasterize, FreehandClosesBackToStart) {
    std::vector<Point> path{{1, 1}, {7, 1}, {7, 7}, {1, 7}};
    const BinaryMask poly = rasterize({DrawMode::polygon, path, Structure::os}, {8, 8});
    AnnotationShape free{DrawMode::freehand, path, Structure::os};
    free.closed = false;
    EXPECT_EQ(rasterize(free, {8, 8}).pixels, poly.pixels);
}

TEST(Rasterize, ClipsToCanvas) {
    const BinaryMask m =
        rasterize({DrawMode::polygon, {{-5, -5}, {50, -5}, {50, 50}, {-5, 50}}, Structure::tissue}, {4, 3});
    for (auto v : m.pixels.pixels()) EXPECT_EQ(v, 1);
}

TEST(Rasterize, ValidatesShape) {
    EXPECT_THROW(rasterize({DrawMode::polygon, {{0, 0}, {1, 1}}, Structure::tissue}, {4, 4}), InvalidArgument);
    EXPECT_THROW(rasterize({DrawMode::freehand, {{0, 0}}, Structure::tissue}, {4, 4}), InvalidArgument);
    EXPECT_THROW(rasterize({DrawMode::polygon, {{0, 0}, {1, NAN}, {2, 0}}, Structure::tissue}, {4, 4}),
                 InvalidArgument);
    EXPECT_THROW(rasterize({DrawMode::polygon, {{0, 0}, {1, 1}, {2, 0}}, Structure::tissue}, {0, 4}),
                 InvalidArgument);
}

TEST(Rasterize, UnionOfOverlappingShapes) {
    std::vector<AnnotationShape> shapes{
        {DrawMode::polygon, {{0, 0}, {3, 0}, {3, 3}, {0, 3}}, Structure::os},
        {DrawMode::polygon, {{2, 2}, {5, 2}, {5, 5}, {2, 5}}, Structure::os},
        {DrawMode::polygon, {{0, 0}, {6, 0}, {6, 6}, {0, 6}}, Structure::tissue},
    };
    const BinaryMask u = rasterize_union(shapes, Structure::os, {6, 6});
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x) {
            const bool in = (x < 3 && y < 3) || (x >= 2 && x < 5 && y >= 2 && y < 5);
            EXPECT_EQ(u.pixels(x, y) != 0, in);
        }
    EXPECT_EQ(u.structure, Structure::os);
}

TEST(ShapeJson, RoundTripIsVertexExact) {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> c(-1e4, 1e4);
    for (int trial = 0; trial < 200; ++trial) {
        AnnotationShape s;
        s.mode = trial % 2 ? DrawMode::freehand : DrawMode::polygon;
        s.structure = static_cast<Structure>(1 + trial % 3);
        s.closed = trial % 5 != 0;
        for (int k = 0; k < 3 + trial % 7; ++k) s.vertices.push_back({c(rng), c(rng)});
        const nlohmann::json j = s;
        EXPECT_EQ(nlohmann::json::parse(j.dump()).get<AnnotationShape>(), s);
    }
}

TEST(ShapeJson, RejectsUnknownModeAndStructure) {
    auto j = nlohmann::json::parse(R"({"mode":"circle","structure":"os","vertices":[[0,0],[1,0],[1,1]]})");
    EXPECT_THROW(j.get<AnnotationShape>(), InvalidArgument);
    j["mode"] = "polygon";
    j["structure"] = "cervix";
    EXPECT_THROW(j.get<AnnotationShape>(), InvalidArgument);
    j["structure"] = "vaginal";
    EXPECT_EQ(j.get<AnnotationShape>().structure, Structure::vaginal_wall);
    j["vertices"] = nlohmann::json::array({nlohmann::json::array({1, 2, 3})});
    EXPECT_THROW(j.get<AnnotationShape>(), InvalidArgument);
}

TEST(ClassMapPng, RandomMapsRoundTripBitExact) {
    TempDir dir;
    std::mt19937_64 rng(37);
    std::uniform_int_distribution<int> side(1, 64);
    for (int trial = 0; trial < 100; ++trial) {
        const ClassMap m = testing::random_classmap(rng, side(rng), side(rng));
        const auto path = dir / ("m" + std::to_string(trial) + ".png");
        encode_classmap(m, path);
        ASSERT_EQ(decode_classmap(path), m) << "trial " << trial;
    }
}

TEST(ClassMapPng, StoredWithClassPalette) {
    TempDir dir;
    ClassMap m(4, 1);
    for (int x = 0; x < 4; ++x) m.labels(x, 0) = std::uint8_t(x);
    encode_classmap(m, dir / "p.png");
    const DecodedPng d = decode_png(read_file_bytes(dir / "p.png"));
    EXPECT_TRUE(d.paletted);
    EXPECT_EQ(d.samples, (std::vector<std::uint8_t>{0, 1, 2, 3}));
}

TEST(ClassMapPng, RejectsBadLabelsAndCorruptData) {
    TempDir dir;
    Raster<std::uint8_t> gray(2, 2, 0);
    gray(1, 1) = 9;
    const auto bytes = encode_png_gray8(gray);
    write_file_atomic(dir / "bad.png", bytes);
    EXPECT_THROW(decode_classmap(dir / "bad.png"), InvalidLabel);
    std::ofstream(dir / "junk.png") << "not a png";
    EXPECT_THROW(decode_classmap(dir / "junk.png"), CorruptFile);
    auto truncated = bytes;
    truncated.resize(truncated.size() / 2);
    write_file_atomic(dir / "cut.png", truncated);
    EXPECT_THROW(decode_classmap(dir / "cut.png"), CorruptFile);
    EXPECT_THROW(decode_classmap(dir / "none.png"), FileNotFound);
}

TEST(BinaryMaskPng, RoundTripAndStoredAs255) {
    TempDir dir;
    std::mt19937_64 rng(41);
    const BinaryMask m = testing::random_mask(rng, 13, 9, Structure::os);
    encode_binary_mask(m, dir / "m.png");
    const DecodedPng d = decode_png(read_file_bytes(dir / "m.png"));
    for (auto v : d.samples) EXPECT_TRUE(v == 0 || v == 255);
    const BinaryMask back = decode_binary_mask(dir / "m.png", Structure::os);
    EXPECT_EQ(back.pixels, m.pixels);
    EXPECT_EQ(back.structure, Structure::os);
}

TEST(BinaryMaskPng, RejectsNonBinaryValues) {
    TempDir dir;
    Raster<std::uint8_t> gray(2, 1, 0);
    gray(0, 0) = 128;
    write_file_atomic(dir / "g.png", encode_png_gray8(gray));
    EXPECT_THROW(decode_binary_mask(dir / "g.png", Structure::tissue), InvalidLabel);
}

}  // namespace
}  // namespace m11seg
