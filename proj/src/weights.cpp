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

#include "m11seg/weights.hpp"

#include <bit>
#include <cstring>

#include "m11seg/error.hpp"
#include "m11seg/png_io.hpp"

static_assert(std::endian::native == std::endian::little, "weight archives assume little-endian");

namespace m11seg {
namespace {

constexpr char kMagic[8] = {'M', '1', '1', 'S', 'E', 'G', 'W', '1'};
constexpr std::uint64_t kMaxName = 4096;

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
public:
    Reader(const std::vector<std::uint8_t>& bytes, std::string path) : bytes_(bytes), path_(std::move(path)) {}

    template <typename T>
    T get() {
        T v;
        std::memcpy(&v, take(sizeof(T)), sizeof(T));
        return v;
    }
    const std::uint8_t* take(std::uint64_t n) {
        if (n > bytes_.size() - pos_) throw CorruptFile("truncated weight archive '" + path_ + "'");
        const auto* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    const std::vector<std::uint8_t>& bytes_;
    std::string path_;
    std::size_t pos_ = 0;
};

}  // namespace

void save_weights(const std::filesystem::path& path, const WeightArchive& archive) {
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    const std::string header = archive.header.dump();
    put<std::uint64_t>(out, header.size());
    out.insert(out.end(), header.begin(), header.end());
    put<std::uint64_t>(out, archive.tensors.size());
    for (const auto& [name, tensor] : archive.tensors) {
        put<std::uint64_t>(out, name.size());
        out.insert(out.end(), name.begin(), name.end());
        torch::Tensor t = tensor.detach().to(torch::kCPU).contiguous();
        std::uint8_t dtype = 0;
        if (t.scalar_type() == torch::kLong) dtype = 1;
        else t = t.to(torch::kFloat);
        put<std::uint8_t>(out, dtype);
        put<std::uint8_t>(out, static_cast<std::uint8_t>(t.dim()));
        for (auto d : t.sizes()) put<std::int64_t>(out, d);
        const auto* p = static_cast<const std::uint8_t*>(t.data_ptr());
        out.insert(out.end(), p, p + t.numel() * t.element_size());
    }
    write_file_atomic(path, out);
}

WeightArchive load_weights(const std::filesystem::path& path) {
    if (!std::filesystem::is_regular_file(path))
        throw FileNotFound("no weight archive at '" + path.string() + "'");
    const auto bytes = read_file_bytes(path);
    Reader in(bytes, path.string());
    if (std::memcmp(in.take(sizeof kMagic), kMagic, sizeof kMagic) != 0)
        throw CorruptFile("'" + path.string() + "' is not a weight archive");

    WeightArchive archive;
    const auto header_len = in.get<std::uint64_t>();
    const auto* h = in.take(header_len);
    try {
        archive.header = nlohmann::json::parse(h, h + header_len);
    } catch (const nlohmann::json::exception& e) {
        throw CorruptFile("weight archive header: " + std::string(e.what()));
    }
    const auto count = in.get<std::uint64_t>();
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto name_len = in.get<std::uint64_t>();
        if (name_len > kMaxName) throw CorruptFile("weight archive: tensor name too long");
        const auto* np = in.take(name_len);
        std::string name(reinterpret_cast<const char*>(np), name_len);
        const auto dtype = in.get<std::uint8_t>();
        if (dtype > 1) throw CorruptFile("weight archive: unknown dtype for '" + name + "'");
        const auto rank = in.get<std::uint8_t>();
        std::vector<std::int64_t> dims(rank);
        std::uint64_t numel = 1;
        for (auto& d : dims) {
            d = in.get<std::int64_t>();
            if (d < 0) throw CorruptFile("weight archive: negative dim for '" + name + "'");
            numel *= static_cast<std::uint64_t>(d);
        }
        const auto type = dtype == 0 ? torch::kFloat : torch::kLong;
        const std::uint64_t elem = dtype == 0 ? 4 : 8;
        if (numel > bytes.size() / elem) throw CorruptFile("weight archive: tensor '" + name + "' too large");
        torch::Tensor t = torch::empty(dims, torch::TensorOptions().dtype(type));
        std::memcpy(t.data_ptr(), in.take(numel * elem), numel * elem);
        archive.tensors.emplace_back(std::move(name), std::move(t));
    }
    if (!in.done()) throw CorruptFile("weight archive '" + path.string() + "' has trailing bytes");
    return archive;
}

}  // namespace m11seg
