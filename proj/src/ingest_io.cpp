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

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <fstream>

#include "json.hpp"
#include "m11seg/ingest.hpp"

namespace m11seg {

M11Image load_m11(const std::filesystem::path& path) {
    if (!std::filesystem::is_regular_file(path))
        throw FileNotFound("no raster at '" + path.string() + "'");

    cv::Mat raw;
    try {
        raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    } catch (const cv::Exception& e) {
        throw UnreadableFormat("cannot decode '" + path.string() + "': " + e.what());
    }
    if (raw.empty()) throw UnreadableFormat("cannot decode '" + path.string() + "'");
    if (raw.channels() != 1) throw MultiChannelInput(path.string(), raw.channels());

    cv::Mat f32;
    switch (raw.depth()) {
        case CV_8U:
        case CV_16U:
        case CV_32F:
            raw.convertTo(f32, CV_32F);
            break;
        default:
            throw UnreadableFormat("'" + path.string() +
                                   "' is not 8/16-bit integer or 32-bit float");
    }

    M11Image img;
    img.pixels = Raster<float>(f32.cols, f32.rows);
    for (int y = 0; y < f32.rows; ++y) {
        const float* row = f32.ptr<float>(y);
        for (int x = 0; x < f32.cols; ++x) img.pixels(x, y) = row[x];
    }
    img.original_size = img.size();
    img.sample_id = path.stem().string();
    return img;
}

M11Image load_sample(const std::filesystem::path& sidecar) {
    std::ifstream in(sidecar);
    if (!in) throw FileNotFound("no sample sidecar at '" + sidecar.string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw CorruptFile("sidecar '" + sidecar.string() + "': " + e.what());
    }
    std::filesystem::path image_path = j.at("image_path").get<std::string>();
    if (image_path.is_relative()) image_path = sidecar.parent_path() / image_path;

    M11Image img = load_m11(image_path);
    img.sample_id = j.at("sample_id").get<std::string>();
    img.acquisition_day = j.at("acquisition_day").get<int>();
    if (img.acquisition_day < 0 || img.acquisition_day > kMaxAcquisitionDay)
        throw InvalidArgument("acquisition_day " + std::to_string(img.acquisition_day) +
                              " outside [0, 18]");
    return img;
}

void write_m11_tiff16(const std::filesystem::path& path, const Raster<float>& counts) {
    cv::Mat m(counts.height(), counts.width(), CV_16U);
    for (int y = 0; y < m.rows; ++y) {
        auto* row = m.ptr<std::uint16_t>(y);
        for (int x = 0; x < m.cols; ++x) {
            const double v = std::clamp(double(counts(x, y)), 0.0, 65535.0);
            row[x] = static_cast<std::uint16_t>(std::lround(v));
        }
    }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), m)) throw Error("cannot write TIFF '" + path.string() + "'");
}

}  // namespace m11seg
