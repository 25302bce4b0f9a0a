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
#include "m11seg/synth.hpp"

namespace m11seg {

SplitManifest write_synth_dataset(const std::filesystem::path& root,
                                  std::vector<SynthSample>& samples, std::uint64_t seed) {
    namespace fs = std::filesystem;
    fs::create_directories(root);
    SplitManifest manifest;
    manifest.seed = seed;
    for (auto& s : samples) {
        const std::string& id = s.record.sample_id;
        s.record.image_path = "images/" + id + ".tif";
        s.record.classmap_path = "labels/" + id + ".png";
        s.record.mask_paths = {{"tissue", "masks/" + id + "_tissue.png"},
                               {"os", "masks/" + id + "_os.png"},
                               {"vaginal_wall", "masks/" + id + "_vaginal_wall.png"}};

        write_m11_tiff16(root / s.record.image_path, s.image.pixels);
        encode_binary_mask(s.masks.tissue, root / s.record.mask_paths["tissue"]);
        encode_binary_mask(s.masks.os, root / s.record.mask_paths["os"]);
        encode_binary_mask(s.masks.vaginal_wall, root / s.record.mask_paths["vaginal_wall"]);
        encode_classmap(s.labels, root / s.record.classmap_path);

        const nlohmann::json sidecar{{"sample_id", id},
                                     {"acquisition_day", s.record.acquisition_day},
                                     {"image_path", "../" + s.record.image_path}};
        write_file_atomic(root / "samples" / (id + ".json"), sidecar.dump(2) + "\n");
        manifest.records.push_back(s.record);
    }
    write_file_atomic(root / "manifest.json", manifest_to_json(manifest).dump(2) + "\n");
    return manifest;
}

}  // namespace m11seg
