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

/// @file service.hpp
/// Annotation backend. Shapes are stored per sample under
/// <data_root>/annotations/<id>.shapes.json; exports write <id>.png (ClassMap)
/// and one binary mask per structure next to them.
///
/// HTTP:
///   GET  /samples                  -> [{sample_id, acquisition_day, split, complete, n_shapes}]
///   GET  /samples/{id}/image       -> 8-bit PNG, ?scale= overrides the display scale
///   GET  /samples/{id}/shapes      -> {sample_id, shapes, class_definitions, dirty, last_saved}
///   PUT  /samples/{id}/shapes      <- {shapes: [...]} or a bare array
///   POST /samples/{id}/export      -> indexed ClassMap PNG
///   GET  /classes                  -> [{class_id, name, color}]

#ifndef M11SEG_SERVICE_HPP
#define M11SEG_SERVICE_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "json.hpp"
#include "m11seg/dataset.hpp"
#include "m11seg/maskops.hpp"

namespace m11seg {

struct ServiceConfig {
    std::filesystem::path data_root;
    std::string host = "127.0.0.1";
    int port = 8080;  // 0 picks a free port
    double display_scale = 0.5;
};

struct ClassDefinition {
    int class_id = 0;
    std::string name;
    Rgb color;
};

struct SampleSummary {
    std::string sample_id;
    int acquisition_day = 0;
    Split split = Split::train;
    bool complete = false;
    std::size_t n_shapes = 0;
};

struct AnnotationSession {
    std::string sample_id;
    std::vector<AnnotationShape> shapes;
    std::vector<ClassDefinition> class_definitions;
    bool dirty = false;
    std::optional<std::string> last_saved;  // ISO-8601 UTC
};

std::vector<ClassDefinition> default_class_definitions();
void to_json(nlohmann::json& j, const ClassDefinition& c);
void from_json(const nlohmann::json& j, ClassDefinition& c);
void to_json(nlohmann::json& j, const SampleSummary& s);
void to_json(nlohmann::json& j, const AnnotationSession& s);

class AnnotationService {
public:
    /// Loads <data_root>/manifest.json; throws FileNotFound when it is missing.
    /// <data_root>/classes.json, when present, replaces the default classes.
    explicit AnnotationService(ServiceConfig cfg);
    ~AnnotationService();
    AnnotationService(const AnnotationService&) = delete;
    AnnotationService& operator=(const AnnotationService&) = delete;

    std::vector<SampleSummary> list_samples() const;
    /// Normalized intensity as 8-bit gray PNG; scale <= 0 uses the display scale.
    std::vector<std::uint8_t> image_png(const std::string& id, double scale = 0.0) const;
    AnnotationSession get_shapes(const std::string& id) const;
    /// Validates every shape, then replaces the stored list atomically.
    AnnotationSession put_shapes(const std::string& id, const std::vector<AnnotationShape>& shapes);
    /// Union per structure at original resolution, then composite. Throws
    /// NotFound for unknown ids and InvalidArgument when no shapes are saved.
    ClassMap export_classmap(const std::string& id);
    const std::vector<ClassDefinition>& classes() const noexcept { return classes_; }

    std::filesystem::path shapes_path(const std::string& id) const;
    std::filesystem::path classmap_path(const std::string& id) const;

    /// Binds and serves on a background thread; returns the bound port.
    int start();
    /// Serves on the calling thread until stop().
    void listen();
    void stop();

private:
    struct Entry {
        SampleRecord record;
        mutable std::shared_mutex mutex;
    };
    const Entry& entry(const std::string& id) const;
    Entry& entry(const std::string& id);
    M11Image load_image(const Entry& e) const;
    std::vector<AnnotationShape> read_shapes(const std::string& id, std::optional<std::string>* saved) const;
    void setup_routes();

    ServiceConfig cfg_;
    std::vector<std::string> order_;
    std::map<std::string, std::unique_ptr<Entry>> entries_;
    std::vector<ClassDefinition> classes_;
    struct Http;
    std::unique_ptr<Http> http_;
};

}  // namespace m11seg

#endif  // M11SEG_SERVICE_HPP
