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

/// @file maskops.hpp
/// Binary structure masks, priority compositing into class maps and
/// rasterization of annotation polygons.

#ifndef M11SEG_MASKOPS_HPP
#define M11SEG_MASKOPS_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "m11seg/raster.hpp"

namespace m11seg {

struct Point {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const Point&, const Point&) = default;
};

enum class DrawMode { polygon, freehand };

struct AnnotationShape {
    DrawMode mode = DrawMode::polygon;
    std::vector<Point> vertices;  // image pixel coordinates
    Structure structure = Structure::tissue;
    bool closed = true;

    std::size_t min_vertices() const noexcept { return mode == DrawMode::polygon ? 3 : 2; }

    void validate() const {
        if (vertices.size() < min_vertices())
            throw InvalidArgument(std::string(mode == DrawMode::polygon ? "polygon" : "freehand") +
                                  " shape needs at least " + std::to_string(min_vertices()) +
                                  " vertices, got " + std::to_string(vertices.size()));
        for (const auto& v : vertices)
            if (!std::isfinite(v.x) || !std::isfinite(v.y))
                throw InvalidArgument("shape vertex is not finite");
    }

    friend bool operator==(const AnnotationShape&, const AnnotationShape&) = default;
};

struct StructureMasks {
    BinaryMask tissue;
    BinaryMask os;
    BinaryMask vaginal_wall;
};

/// Priority compositing: vaginal wall (3) > os (2) > tissue (1) > background (0).
inline ClassMap composite(const BinaryMask& tissue, const BinaryMask& os,
                          const BinaryMask& vaginal) {
    if (tissue.size() != os.size() || tissue.size() != vaginal.size())
        throw DimensionMismatch("composite: masks must share dimensions");

    ClassMap out(tissue.width(), tissue.height());
    auto dst = out.labels.pixels();
    const auto t = tissue.pixels.pixels();
    const auto o = os.pixels.pixels();
    const auto v = vaginal.pixels.pixels();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        if (v[i]) dst[i] = 3;
        else if (o[i]) dst[i] = 2;
        else if (t[i]) dst[i] = 1;
        else dst[i] = 0;
    }
    return out;
}

inline ClassMap composite(const StructureMasks& m) {
    return composite(m.tissue, m.os, m.vaginal_wall);
}

/// Per-class indicators; composite(decompose(m)) == m.
inline StructureMasks decompose(const ClassMap& map) {
    const int w = map.width();
    const int h = map.height();
    StructureMasks out{BinaryMask(w, h, Structure::tissue), BinaryMask(w, h, Structure::os),
                       BinaryMask(w, h, Structure::vaginal_wall)};
    const auto src = map.labels.pixels();
    auto t = out.tissue.pixels.pixels();
    auto o = out.os.pixels.pixels();
    auto v = out.vaginal_wall.pixels.pixels();
    for (std::size_t i = 0; i < src.size(); ++i) {
        switch (src[i]) {
            case 0: break;
            case 1: t[i] = 1; break;
            case 2: o[i] = 1; break;
            case 3: v[i] = 1; break;
            default:
                throw InvalidLabel("decompose: label " + std::to_string(src[i]) +
                                   " outside {0,1,2,3}");
        }
    }
    return out;
}

/// Even-odd fill. A pixel is set iff its center (x + 0.5, y + 0.5) is inside;
/// edge crossings use half-open spans [ymin, ymax) and [xleft, xright), which
/// is the top-left tie rule. Freehand paths are closed back to the first vertex.
inline BinaryMask rasterize(const AnnotationShape& shape, Size canvas) {
    shape.validate();
    if (canvas.width <= 0 || canvas.height <= 0)
        throw InvalidArgument("rasterize: canvas dimensions must be positive");

    BinaryMask out(canvas.width, canvas.height, shape.structure);
    const auto& vs = shape.vertices;
    const std::size_t n = vs.size();

    double ymin = vs[0].y, ymax = vs[0].y;
    for (const auto& p : vs) {
        ymin = std::min(ymin, p.y);
        ymax = std::max(ymax, p.y);
    }
    const int row_begin = std::max(0, static_cast<int>(std::floor(ymin - 0.5)));
    const int row_end = std::min(canvas.height, static_cast<int>(std::ceil(ymax - 0.5)) + 1);

    std::vector<double> xs;
    for (int y = row_begin; y < row_end; ++y) {
        const double yc = y + 0.5;
        xs.clear();
        for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
            const Point& a = vs[i];
            const Point& b = vs[j];
            if ((a.y > yc) != (b.y > yc)) xs.push_back((b.x - a.x) * (yc - a.y) / (b.y - a.y) + a.x);
        }
        std::sort(xs.begin(), xs.end());
        for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
            // Centers xc with xs[k] <= xc < xs[k+1].
            const int first = std::max(0, static_cast<int>(std::ceil(xs[k] - 0.5)));
            const int last = std::min(canvas.width, static_cast<int>(std::ceil(xs[k + 1] - 0.5)));
            for (int x = first; x < last; ++x) out.pixels(x, y) = 1;
        }
    }
    return out;
}

/// Union of several rasterized shapes into one mask.
inline BinaryMask rasterize_union(const std::vector<AnnotationShape>& shapes, Structure s,
                                  Size canvas) {
    BinaryMask out(canvas.width, canvas.height, s);
    for (const auto& shape : shapes) {
        if (shape.structure != s) continue;
        const BinaryMask m = rasterize(shape, canvas);
        auto dst = out.pixels.pixels();
        const auto src = m.pixels.pixels();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] |= src[i];
    }
    return out;
}

// JSON form: {mode, structure, closed, vertices: [[x, y], ...]}.
inline void to_json(nlohmann::json& j, const AnnotationShape& s) {
    nlohmann::json verts = nlohmann::json::array();
    for (const auto& p : s.vertices) verts.push_back({p.x, p.y});
    j = nlohmann::json{{"mode", s.mode == DrawMode::polygon ? "polygon" : "freehand"},
                       {"structure", std::string(structure_name(s.structure))},
                       {"closed", s.closed},
                       {"vertices", std::move(verts)}};
}

inline void from_json(const nlohmann::json& j, AnnotationShape& s) {
    const auto mode = j.at("mode").get<std::string>();
    if (mode == "polygon") s.mode = DrawMode::polygon;
    else if (mode == "freehand") s.mode = DrawMode::freehand;
    else throw InvalidArgument("unknown drawing mode '" + mode + "'");
    s.structure = parse_structure(j.at("structure").get<std::string>());
    s.closed = j.value("closed", true);
    s.vertices.clear();
    for (const auto& v : j.at("vertices")) {
        if (!v.is_array() || v.size() != 2) throw InvalidArgument("vertex must be [x, y]");
        s.vertices.push_back({v[0].get<double>(), v[1].get<double>()});
    }
}

/// Indexed-palette 8-bit PNG holding raw labels 0..3.
void encode_classmap(const ClassMap& map, const std::filesystem::path& path);
/// Throws CorruptFile on unreadable data and InvalidLabel on labels > 3.
ClassMap decode_classmap(const std::filesystem::path& path);

/// 8-bit grayscale PNG with values {0, 255}.
void encode_binary_mask(const BinaryMask& mask, const std::filesystem::path& path);
BinaryMask decode_binary_mask(const std::filesystem::path& path, Structure s);

}  // namespace m11seg

#endif  // M11SEG_MASKOPS_HPP
