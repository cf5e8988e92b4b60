/*******************************************************************************
* Copyright 2026 The frqreg Authors
*
* Licensed under the Apache License, Version 2.0 (the "License");
* you may not use this file except in compliance with the License.
* You may obtain a copy of the License at
*
*     http://www.apache.org/licenses/LICENSE-2.0
*
* Unless required by applicable law or agreed to in writing, software
* distributed under the License is distributed on an "AS IS" BASIS,
* WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
* See the License for the specific language governing permissions and
* limitations under the License.
*******************************************************************************/

#pragma once

// Checkpoint file layout (all integers and reals little-endian):
//
//   "FRQR" | u32 version | u32 tensor count
//   per tensor: u16 name length | name bytes | u8 rank | u32 dims[rank] | f64 values
//   u32 CRC-32 (zlib polynomial) of every preceding byte
//
// Everything is stored as a named tensor: parameters, batch-norm statistics,
// optimizer velocities, the model configuration echo and the loop state.

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "frqreg/data.hpp"
#include "frqreg/error.hpp"
#include "frqreg/image.hpp"
#include "frqreg/model.hpp"

namespace frqreg {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
    std::string name;
    Shape shape;
    std::vector<double> values;

    bool operator==(const NamedArray&) const = default;
};

struct Checkpoint {
    std::uint32_t version = kCheckpointVersion;
    std::vector<NamedArray> tensors;

    const NamedArray* find(const std::string& name) const {
        for (const auto& t : tensors) {
            if (t.name == name) return &t;
        }
        return nullptr;
    }

    const NamedArray& get(const std::string& name) const {
        if (const auto* t = find(name)) return *t;
        throw FormatError("checkpoint has no tensor '" + name + "'");
    }

    void put(std::string name, std::vector<double> values) {
        Shape shape{values.size()};
        put(std::move(name), std::move(shape), std::move(values));
    }

    void put(std::string name, Shape shape, std::vector<double> values) {
        if (shape_numel(shape) != values.size()) throw DimensionError("checkpoint tensor '" + name + "' shape mismatch");
        for (auto& t : tensors) {
            if (t.name == name) {
                t.shape = std::move(shape);
                t.values = std::move(values);
                return;
            }
        }
        tensors.push_back({std::move(name), std::move(shape), std::move(values)});
    }

    bool operator==(const Checkpoint&) const = default;
};

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put_le(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

class Reader {
public:
    explicit Reader(const std::string& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

    template <typename T>
    T get() {
        if (pos_ + sizeof(T) > end_) throw FormatError("checkpoint truncated");
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    std::string get_string(std::size_t n) {
        if (pos_ + n > end_) throw FormatError("checkpoint truncated");
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == end_; }

private:
    const std::string& bytes_;
    std::size_t end_;
    std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(const std::string& bytes, std::size_t n) {
    return static_cast<std::uint32_t>(
        ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(n)));
}

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ckpt) {
    std::string out = "FRQR";
    detail::put_le<std::uint32_t>(out, ckpt.version);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const NamedArray& t : ckpt.tensors) {
        if (t.name.size() > 0xFFFF) throw FormatError("tensor name too long");
        if (t.shape.size() > 0xFF) throw FormatError("tensor rank too large");
        detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
        out += t.name;
        detail::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.shape.size()));
        for (std::size_t d : t.shape) detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
        for (double v : t.values) detail::put_le<double>(out, v);
    }
    detail::put_le<std::uint32_t>(out, detail::crc32_of(out, out.size()));
    return out;
}

inline Checkpoint decode_checkpoint(const std::string& bytes) {
    if (bytes.size() < 16 || bytes.compare(0, 4, "FRQR") != 0) throw FormatError("not a checkpoint (bad magic)");
    const std::size_t body_end = bytes.size() - 4;
    std::uint32_t stored_crc = 0;
    std::memcpy(&stored_crc, bytes.data() + body_end, 4);
    if (stored_crc != detail::crc32_of(bytes, body_end)) throw FormatError("checkpoint CRC mismatch");

    detail::Reader in(bytes, body_end);
    in.get_string(4);
    Checkpoint ckpt;
    ckpt.version = in.get<std::uint32_t>();
    if (ckpt.version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(ckpt.version));
    }
    const std::uint32_t count = in.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedArray t;
        t.name = in.get_string(in.get<std::uint16_t>());
        const std::uint8_t rank = in.get<std::uint8_t>();
        for (std::uint8_t d = 0; d < rank; ++d) t.shape.push_back(in.get<std::uint32_t>());
        const std::size_t n = shape_numel(t.shape);
        t.values.resize(n);
        for (std::size_t k = 0; k < n; ++k) t.values[k] = in.get<double>();
        ckpt.tensors.push_back(std::move(t));
    }
    if (!in.done()) throw FormatError("trailing bytes in checkpoint");
    return ckpt;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    detail::write_file(path, encode_checkpoint(ckpt));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(detail::read_file(path));
}

// ---------------------------------------------------------------------------
// Network <-> checkpoint

inline void store_model_config(Checkpoint& ckpt, const ModelConfig& cfg) {
    ckpt.put("config.method", {static_cast<double>(static_cast<int>(cfg.method))});
    ckpt.put("config.replaced_layers", {static_cast<double>(cfg.replaced_layers)});
    ckpt.put("config.mask_sigma", {cfg.mask_sigma});
    ckpt.put("config.widths", std::vector<double>(cfg.widths.begin(), cfg.widths.end()));
    ckpt.put("config.blocks_per_stage", {static_cast<double>(cfg.blocks_per_stage)});
    ckpt.put("config.num_classes", {static_cast<double>(cfg.num_classes)});
    ckpt.put("config.projection_dim", {static_cast<double>(cfg.projection_dim)});
    ckpt.put("config.input_size", {static_cast<double>(cfg.in_channels), static_cast<double>(cfg.in_height),
                                   static_cast<double>(cfg.in_width)});
}

inline ModelConfig read_model_config(const Checkpoint& ckpt) {
    auto scalar = [&](const std::string& name) {
        const auto& t = ckpt.get(name);
        if (t.values.size() != 1) throw FormatError(name + " must hold one value");
        return t.values[0];
    };
    auto count = [&](double v, const std::string& name) {
        if (!(v >= 0.0) || v != std::floor(v)) throw FormatError(name + " must be a non-negative integer");
        return static_cast<std::size_t>(v);
    };
    ModelConfig cfg;
    const double method = scalar("config.method");
    if (method < 0 || method > 3 || method != std::floor(method)) throw FormatError("bad config.method");
    cfg.method = static_cast<Method>(static_cast<int>(method));
    cfg.replaced_layers = count(scalar("config.replaced_layers"), "config.replaced_layers");
    cfg.mask_sigma = scalar("config.mask_sigma");
    cfg.widths.clear();
    for (double w : ckpt.get("config.widths").values) cfg.widths.push_back(count(w, "config.widths"));
    cfg.blocks_per_stage = count(scalar("config.blocks_per_stage"), "config.blocks_per_stage");
    cfg.num_classes = count(scalar("config.num_classes"), "config.num_classes");
    cfg.projection_dim = count(scalar("config.projection_dim"), "config.projection_dim");
    const auto& in = ckpt.get("config.input_size").values;
    if (in.size() != 3) throw FormatError("config.input_size must hold 3 values");
    cfg.in_channels = count(in[0], "config.input_size");
    cfg.in_height = count(in[1], "config.input_size");
    cfg.in_width = count(in[2], "config.input_size");
    return cfg;
}

inline void store_network(Checkpoint& ckpt, Network& net) {
    store_model_config(ckpt, net.config);
    for (auto& [name, t] : net.parameters()) {
        ckpt.put("param." + name, t.shape(), std::vector<double>(t.data().begin(), t.data().end()));
    }
    for (auto& [name, buf] : net.buffers()) ckpt.put("buffer." + name, *buf);
}

inline void store_normalization(Checkpoint& ckpt, const Normalization& norm) {
    ckpt.put("config.norm_mean", norm.mean);
    ckpt.put("config.norm_std", norm.std);
}

inline Normalization read_normalization(const Checkpoint& ckpt) {
    Normalization norm;
    if (const auto* m = ckpt.find("config.norm_mean")) norm.mean = m->values;
    if (const auto* s = ckpt.find("config.norm_std")) norm.std = s->values;
    return norm;
}

/// Rebuilds a network from a checkpoint: structure from the config echo,
/// values from the stored parameters and statistics.
inline Network restore_network(const Checkpoint& ckpt) {
    Network net = build_model(read_model_config(ckpt), 0);
    for (auto& [name, t] : net.parameters()) {
        const NamedArray& a = ckpt.get("param." + name);
        if (a.shape != t.shape()) throw FormatError("checkpoint shape mismatch for " + name);
        std::copy(a.values.begin(), a.values.end(), t.mutable_data().begin());
    }
    for (auto& [name, buf] : net.buffers()) {
        const NamedArray& a = ckpt.get("buffer." + name);
        if (a.values.size() != buf->size()) throw FormatError("checkpoint size mismatch for " + name);
        *buf = a.values;
    }
    return net;
}

}  // namespace frqreg
