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

#include "m11seg/service.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <mutex>
#include <thread>

#include "httplib.h"
#include "m11seg/error.hpp"
#include "m11seg/ingest.hpp"
#include "m11seg/png_io.hpp"

namespace m11seg {
namespace {

std::string hex_color(Rgb c) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c.r, c.g, c.b);
    return buf;
}

Rgb parse_color(const std::string& s) {
    unsigned r = 0, g = 0, b = 0;
    if (s.size() != 7 || s[0] != '#' || std::sscanf(s.c_str() + 1, "%2x%2x%2x", &r, &g, &b) != 3)
        throw InvalidArgument("color must be #rrggbb, got '" + s + "'");
    return {std::uint8_t(r), std::uint8_t(g), std::uint8_t(b)};
}

std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::filesystem::path resolve(const std::filesystem::path& root, const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : root / path;
}

}  // namespace

std::vector<ClassDefinition> default_class_definitions() {
    std::vector<ClassDefinition> out;
    for (int c = 0; c < kNumClasses; ++c) out.push_back({c, std::string(kClassNames[c]), kClassPalette[c]});
    return out;
}

void to_json(nlohmann::json& j, const ClassDefinition& c) {
    j = nlohmann::json{{"class_id", c.class_id}, {"name", c.name}, {"color", hex_color(c.color)}};
}

void from_json(const nlohmann::json& j, ClassDefinition& c) {
    c.class_id = j.at("class_id").get<int>();
    c.name = j.at("name").get<std::string>();
    c.color = parse_color(j.at("color").get<std::string>());
}

void to_json(nlohmann::json& j, const SampleSummary& s) {
    j = nlohmann::json{{"sample_id", s.sample_id},
                       {"acquisition_day", s.acquisition_day},
                       {"split", std::string(split_name(s.split))},
                       {"complete", s.complete},
                       {"n_shapes", s.n_shapes}};
}

void to_json(nlohmann::json& j, const AnnotationSession& s) {
    j = nlohmann::json{{"sample_id", s.sample_id},
                       {"shapes", s.shapes},
                       {"class_definitions", s.class_definitions},
                       {"dirty", s.dirty},
                       {"last_saved", s.last_saved ? nlohmann::json(*s.last_saved) : nlohmann::json()}};
}

struct AnnotationService::Http {
    httplib::Server server;
    std::thread thread;
};

AnnotationService::AnnotationService(ServiceConfig cfg) : cfg_(std::move(cfg)), http_(std::make_unique<Http>()) {
    if (!(cfg_.display_scale > 0.0) || cfg_.display_scale > 1.0)
        throw InvalidArgument("display scale must be in (0, 1]");
    const SplitManifest manifest = load_manifest(cfg_.data_root / "manifest.json");
    for (const auto& r : manifest.records) {
        if (entries_.count(r.sample_id)) throw InvalidArgument("duplicate sample id '" + r.sample_id + "'");
        auto e = std::make_unique<Entry>();
        e->record = r;
        order_.push_back(r.sample_id);
        entries_.emplace(r.sample_id, std::move(e));
    }
    const auto classes_file = cfg_.data_root / "classes.json";
    if (std::filesystem::exists(classes_file)) {
        std::ifstream in(classes_file);
        try {
            classes_ = nlohmann::json::parse(in).get<std::vector<ClassDefinition>>();
        } catch (const nlohmann::json::exception& ex) {
            throw CorruptFile("classes '" + classes_file.string() + "': " + ex.what());
        }
        const auto defaults = default_class_definitions();
        if (classes_.size() < defaults.size())
            throw InvalidArgument("classes.json must keep the four default classes");
        for (std::size_t i = 0; i < defaults.size(); ++i)
            if (classes_[i].class_id != defaults[i].class_id)
                throw InvalidArgument("classes.json must start with class ids 0..3");
    } else {
        classes_ = default_class_definitions();
    }
    std::filesystem::create_directories(cfg_.data_root / "annotations");
    setup_routes();
}

AnnotationService::~AnnotationService() { stop(); }

const AnnotationService::Entry& AnnotationService::entry(const std::string& id) const {
    const auto it = entries_.find(id);
    if (it == entries_.end()) throw NotFound("unknown sample '" + id + "'");
    return *it->second;
}

AnnotationService::Entry& AnnotationService::entry(const std::string& id) {
    return const_cast<Entry&>(std::as_const(*this).entry(id));
}

std::filesystem::path AnnotationService::shapes_path(const std::string& id) const {
    return cfg_.data_root / "annotations" / (id + ".shapes.json");
}

std::filesystem::path AnnotationService::classmap_path(const std::string& id) const {
    return cfg_.data_root / "annotations" / (id + ".png");
}

M11Image AnnotationService::load_image(const Entry& e) const {
    if (e.record.image_path.empty()) throw NotFound("sample '" + e.record.sample_id + "' has no image");
    M11Image img = load_m11(resolve(cfg_.data_root, e.record.image_path));
    img.sample_id = e.record.sample_id;
    img.acquisition_day = e.record.acquisition_day;
    return img;
}

std::vector<AnnotationShape> AnnotationService::read_shapes(const std::string& id,
                                                            std::optional<std::string>* saved) const {
    const auto path = shapes_path(id);
    std::ifstream in(path);
    if (!in) return {};
    try {
        const auto j = nlohmann::json::parse(in);
        if (saved && j.contains("last_saved") && j["last_saved"].is_string())
            *saved = j["last_saved"].get<std::string>();
        return j.at("shapes").get<std::vector<AnnotationShape>>();
    } catch (const nlohmann::json::exception& ex) {
        throw CorruptFile("shapes '" + path.string() + "': " + ex.what());
    }
}

std::vector<SampleSummary> AnnotationService::list_samples() const {
    std::vector<SampleSummary> out;
    for (const auto& id : order_) {
        const Entry& e = entry(id);
        std::shared_lock lock(e.mutex);
        out.push_back({id, e.record.acquisition_day, e.record.split, std::filesystem::exists(classmap_path(id)),
                       read_shapes(id, nullptr).size()});
    }
    return out;
}

std::vector<std::uint8_t> AnnotationService::image_png(const std::string& id, double scale) const {
    if (scale <= 0.0) scale = cfg_.display_scale;
    if (!std::isfinite(scale) || scale > 1.0) throw InvalidArgument("scale must be in (0, 1]");
    const M11Image img = normalize_m11(load_image(entry(id)));
    const Size target{std::max(1, int(std::lround(img.width() * scale))),
                      std::max(1, int(std::lround(img.height() * scale)))};
    const Raster<float> shown = resize_bilinear(img.pixels, target);
    Raster<std::uint8_t> gray(target.width, target.height);
    for (std::size_t i = 0; i < shown.pixel_count(); ++i)
        gray.pixels()[i] = std::uint8_t(std::lround(255.0 * std::clamp(shown.pixels()[i], 0.0f, 1.0f)));
    return encode_png_gray8(gray);
}

AnnotationSession AnnotationService::get_shapes(const std::string& id) const {
    const Entry& e = entry(id);
    std::shared_lock lock(e.mutex);
    AnnotationSession s;
    s.sample_id = id;
    s.shapes = read_shapes(id, &s.last_saved);
    s.class_definitions = classes_;
    return s;
}

AnnotationSession AnnotationService::put_shapes(const std::string& id, const std::vector<AnnotationShape>& shapes) {
    Entry& e = entry(id);
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        try {
            shapes[i].validate();
        } catch (const InvalidArgument& ex) {
            throw InvalidArgument("shape " + std::to_string(i) + ": " + ex.what());
        }
    }
    AnnotationSession s;
    s.sample_id = id;
    s.shapes = shapes;
    s.class_definitions = classes_;
    s.last_saved = utc_now();
    const nlohmann::json doc{{"sample_id", id}, {"shapes", shapes}, {"last_saved", *s.last_saved}};
    std::unique_lock lock(e.mutex);
    write_file_atomic(shapes_path(id), doc.dump(2));
    return s;
}

ClassMap AnnotationService::export_classmap(const std::string& id) {
    Entry& e = entry(id);
    std::unique_lock lock(e.mutex);
    const auto shapes = read_shapes(id, nullptr);
    if (shapes.empty()) throw InvalidArgument("sample '" + id + "' has no saved shapes to export");
    const M11Image img = load_image(e);
    const Size canvas{img.width(), img.height()};
    const BinaryMask tissue = rasterize_union(shapes, Structure::tissue, canvas);
    const BinaryMask os = rasterize_union(shapes, Structure::os, canvas);
    const BinaryMask vaginal = rasterize_union(shapes, Structure::vaginal_wall, canvas);
    ClassMap map = composite(tissue, os, vaginal);
    const auto dir = cfg_.data_root / "annotations";
    for (const BinaryMask* m : {&tissue, &os, &vaginal})
        encode_binary_mask(*m, dir / (id + "_" + std::string(structure_name(m->structure)) + ".png"));
    encode_classmap(map, classmap_path(id));
    return map;
}

void AnnotationService::setup_routes() {
    auto& srv = http_->server;
    auto json_reply = [](httplib::Response& res, const nlohmann::json& j, int status = 200) {
        res.status = status;
        res.set_content(j.dump(), "application/json");
    };
    srv.set_exception_handler([json_reply](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        int status = 500;
        std::string msg = "internal error";
        try {
            std::rethrow_exception(ep);
        } catch (const NotFound& e) {
            status = 404, msg = e.what();
        } catch (const FileNotFound& e) {
            status = 404, msg = e.what();
        } catch (const InvalidArgument& e) {
            status = 400, msg = e.what();
        } catch (const InvalidLabel& e) {
            status = 400, msg = e.what();
        } catch (const nlohmann::json::exception& e) {
            status = 400, msg = std::string("bad JSON: ") + e.what();
        } catch (const std::exception& e) {
            msg = e.what();
        }
        json_reply(res, {{"error", msg}}, status);
    });

    srv.Get("/samples", [this, json_reply](const httplib::Request&, httplib::Response& res) {
        json_reply(res, list_samples());
    });
    srv.Get("/classes", [this, json_reply](const httplib::Request&, httplib::Response& res) {
        json_reply(res, classes_);
    });
    srv.Get(R"(/samples/([^/]+)/image)", [this](const httplib::Request& req, httplib::Response& res) {
        double scale = 0.0;
        if (req.has_param("scale")) {
            try {
                scale = std::stod(req.get_param_value("scale"));
            } catch (const std::exception&) {
                throw InvalidArgument("scale must be a number");
            }
            if (!(scale > 0.0)) throw InvalidArgument("scale must be in (0, 1]");
        }
        const auto png = image_png(req.matches[1], scale);
        res.set_content(reinterpret_cast<const char*>(png.data()), png.size(), "image/png");
    });
    srv.Get(R"(/samples/([^/]+)/shapes)", [this, json_reply](const httplib::Request& req, httplib::Response& res) {
        json_reply(res, get_shapes(req.matches[1]));
    });
    srv.Put(R"(/samples/([^/]+)/shapes)", [this, json_reply](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        entry(id);
        const auto body = nlohmann::json::parse(req.body);
        const auto& arr = body.is_array() ? body : body.at("shapes");
        if (!arr.is_array()) throw InvalidArgument("shapes must be an array");
        std::vector<AnnotationShape> shapes;
        for (const auto& s : arr) shapes.push_back(s.get<AnnotationShape>());
        json_reply(res, put_shapes(id, shapes));
    });
    srv.Post(R"(/samples/([^/]+)/export)", [this](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        export_classmap(id);
        const auto png = read_file_bytes(classmap_path(id));
        res.set_content(reinterpret_cast<const char*>(png.data()), png.size(), "image/png");
    });
}

int AnnotationService::start() {
    auto& srv = http_->server;
    int port = cfg_.port;
    if (port == 0) {
        port = srv.bind_to_any_port(cfg_.host);
        if (port < 0) throw Error("cannot bind " + cfg_.host);
    } else if (!srv.bind_to_port(cfg_.host, port)) {
        throw Error("cannot bind " + cfg_.host + ":" + std::to_string(port));
    }
    http_->thread = std::thread([&srv] { srv.listen_after_bind(); });
    srv.wait_until_ready();
    return port;
}

void AnnotationService::listen() {
    if (!http_->server.listen(cfg_.host, cfg_.port))
        throw Error("cannot listen on " + cfg_.host + ":" + std::to_string(cfg_.port));
}

void AnnotationService::stop() {
    if (!http_) return;
    http_->server.stop();
    if (http_->thread.joinable()) http_->thread.join();
}

}  // namespace m11seg
