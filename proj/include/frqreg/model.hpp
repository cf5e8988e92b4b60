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

// Configurable mini-ResNet: stem conv -> stages of basic residual blocks ->
// global average pool -> {classification head, projection head}.
//
// Conv ops are numbered in forward order: stem, then per block conv1, conv2
// and (when present) the 1x1 shortcut. The first `replaced_layers` of them
// become FrequencyFilterConv when the method asks for frequency filtering.

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "frqreg/layers.hpp"
#include "frqreg/rng.hpp"

namespace frqreg {

enum class Method { baseline, freq, supcon, both };

inline std::string to_string(Method m) {
    switch (m) {
        case Method::baseline: return "baseline";
        case Method::freq: return "freq";
        case Method::supcon: return "supcon";
        case Method::both: return "both";
    }
    return "?";
}

inline Method parse_method(const std::string& s) {
    if (s == "baseline") return Method::baseline;
    if (s == "freq") return Method::freq;
    if (s == "supcon") return Method::supcon;
    if (s == "both") return Method::both;
    throw ConfigError("unknown method '" + s + "' (expected baseline|freq|supcon|both)");
}

inline bool uses_frequency_filter(Method m) { return m == Method::freq || m == Method::both; }
inline bool uses_supcon(Method m) { return m == Method::supcon || m == Method::both; }

struct ModelConfig {
    Method method = Method::baseline;
    std::size_t replaced_layers = 3;
    double mask_sigma = 0.1;
    std::vector<std::size_t> widths{16, 32, 64};
    std::size_t blocks_per_stage = 2;
    std::size_t num_classes = 10;
    std::size_t projection_dim = 64;
    std::size_t in_channels = 3;
    std::size_t in_height = 32;
    std::size_t in_width = 32;

    std::size_t conv_count() const {
        std::size_t n = 1 + widths.size() * blocks_per_stage * 2;
        for (std::size_t s = 1; s < widths.size(); ++s) {
            if (blocks_per_stage > 0) ++n;  // shortcut of the first block
        }
        return n;
    }

    void validate() const {
        if (widths.empty()) throw ConfigError("model needs at least one stage");
        for (std::size_t w : widths) {
            if (w == 0) throw ConfigError("stage width must be positive");
        }
        if (blocks_per_stage == 0) throw ConfigError("blocks_per_stage must be >= 1");
        if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
        if (projection_dim < 2) throw ConfigError("projection_dim must be >= 2");
        if (in_channels == 0 || in_height < 2 || in_width < 2) throw ConfigError("input size too small");
        if (uses_frequency_filter(method)) {
            if (replaced_layers < 1) throw ConfigError("method " + to_string(method) + " needs replaced_layers >= 1");
            if (replaced_layers > conv_count()) {
                throw ConfigError("replaced_layers " + std::to_string(replaced_layers) + " exceeds the " +
                                  std::to_string(conv_count()) + " conv layers of this model");
            }
            if (!(mask_sigma > 0.0)) throw ConfigError("mask_sigma must be positive");
        }
    }

    bool operator==(const ModelConfig&) const = default;
};

struct ResidualBlock {
    ConvUnit conv1;
    BatchNormLayer bn1;
    ConvUnit conv2;
    BatchNormLayer bn2;
    std::optional<ConvUnit> shortcut;
    std::optional<BatchNormLayer> shortcut_bn;
};

struct DualHeadOutput {
    Tensor logits;      // [N, num_classes]
    Tensor projection;  // [N, projection_dim], unit rows
    Tensor features;    // [N, C] pooled penultimate features
};

/// Called with (conv index, conv output) during forward; used by the
/// activation visualizer.
using ConvTap = std::function<void(std::size_t, const Tensor&)>;

class Network {
public:
    Network() = default;
    Network(Network&&) = default;
    Network& operator=(Network&&) = default;
    Network(const Network&) = delete;
    Network& operator=(const Network&) = delete;

    ModelConfig config;
    ConvUnit stem;
    BatchNormLayer stem_bn;
    std::vector<ResidualBlock> blocks;
    LinearLayer classifier;
    LinearLayer projection;

    /// Conv units in forward order.
    std::vector<ConvUnit*> conv_units() {
        std::vector<ConvUnit*> out{&stem};
        for (auto& b : blocks) {
            out.push_back(&b.conv1);
            out.push_back(&b.conv2);
            if (b.shortcut) out.push_back(&*b.shortcut);
        }
        return out;
    }

    std::size_t frequency_filter_count() {
        std::size_t n = 0;
        for (ConvUnit* u : conv_units()) n += is_frequency_filtered(*u) ? 1 : 0;
        return n;
    }

    /// Named trainable tensors in a fixed order.
    std::vector<std::pair<std::string, Tensor>> parameters() {
        std::vector<std::pair<std::string, Tensor>> out;
        auto conv = [&](const std::string& name, ConvUnit& u) {
            out.emplace_back(name + ".weight", conv_of(u).weight);
            out.emplace_back(name + ".bias", conv_of(u).bias);
        };
        auto bn = [&](const std::string& name, BatchNormLayer& l) {
            out.emplace_back(name + ".gamma", l.gamma);
            out.emplace_back(name + ".beta", l.beta);
        };
        conv("stem.conv", stem);
        bn("stem.bn", stem_bn);
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            const std::string p = block_name(i);
            conv(p + ".conv1", blocks[i].conv1);
            bn(p + ".bn1", blocks[i].bn1);
            conv(p + ".conv2", blocks[i].conv2);
            bn(p + ".bn2", blocks[i].bn2);
            if (blocks[i].shortcut) {
                conv(p + ".shortcut", *blocks[i].shortcut);
                bn(p + ".shortcut_bn", *blocks[i].shortcut_bn);
            }
        }
        out.emplace_back("classifier.weight", classifier.weight);
        out.emplace_back("classifier.bias", classifier.bias);
        out.emplace_back("projection.weight", projection.weight);
        out.emplace_back("projection.bias", projection.bias);
        return out;
    }

    /// Batch-norm running statistics, named.
    std::vector<std::pair<std::string, std::vector<double>*>> buffers() {
        std::vector<std::pair<std::string, std::vector<double>*>> out;
        auto bn = [&](const std::string& name, BatchNormLayer& l) {
            out.emplace_back(name + ".running_mean", &l.running_mean);
            out.emplace_back(name + ".running_var", &l.running_var);
        };
        bn("stem.bn", stem_bn);
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            const std::string p = block_name(i);
            bn(p + ".bn1", blocks[i].bn1);
            bn(p + ".bn2", blocks[i].bn2);
            if (blocks[i].shortcut_bn) bn(p + ".shortcut_bn", *blocks[i].shortcut_bn);
        }
        return out;
    }

    std::size_t parameter_count() {
        std::size_t n = 0;
        for (auto& [name, t] : parameters()) n += t.numel();
        return n;
    }

    void zero_grad() {
        for (auto& [name, t] : parameters()) t.zero_grad();
    }

    void clear_caches() {
        for (ConvUnit* u : conv_units()) {
            if (auto* f = std::get_if<FrequencyFilterConv>(u)) f->clear_cache();
        }
    }

    /// Deep copy of parameters and statistics.
    Network clone() const {
        Network out;
        out.config = config;
        out.stem = clone_unit(stem);
        out.stem_bn = stem_bn.clone();
        for (const auto& b : blocks) {
            ResidualBlock nb{clone_unit(b.conv1), b.bn1.clone(), clone_unit(b.conv2), b.bn2.clone(), std::nullopt,
                             std::nullopt};
            if (b.shortcut) nb.shortcut = clone_unit(*b.shortcut);
            if (b.shortcut_bn) nb.shortcut_bn = b.shortcut_bn->clone();
            out.blocks.push_back(std::move(nb));
        }
        out.classifier = classifier.clone();
        out.projection = projection.clone();
        return out;
    }

    std::string block_name(std::size_t flat) const {
        const std::size_t bps = config.blocks_per_stage;
        return "stage" + std::to_string(flat / bps + 1) + ".block" + std::to_string(flat % bps);
    }
};

namespace detail {

inline Tensor he_normal(const std::string& name, Shape shape, std::size_t fan_in, std::uint64_t seed) {
    const CounterRng rng(seed, fnv1a("init:" + name));
    const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
    std::vector<double> v(shape_numel(shape));
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = rng.normal(i) * std_dev;
    return Tensor::from_data(std::move(shape), std::move(v), true);
}

inline ConvLayer make_conv(const std::string& name, std::size_t in, std::size_t out, std::size_t kernel,
                           std::size_t stride, std::size_t padding, std::uint64_t seed) {
    return ConvLayer(he_normal(name + ".weight", {out, in, kernel, kernel}, in * kernel * kernel, seed),
                     Tensor::zeros({out}, true), stride, padding);
}

inline LinearLayer make_linear(const std::string& name, std::size_t in, std::size_t out, std::uint64_t seed) {
    return LinearLayer(he_normal(name + ".weight", {in, out}, in, seed), Tensor::zeros({out}, true));
}

}  // namespace detail

/// Builds and initializes a network. Initialization draws each parameter from
/// its own named random stream, so the values do not depend on the method or
/// on which other layers exist.
inline Network build_model(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Network net;
    net.config = config;
    const bool filter = uses_frequency_filter(config.method);
    std::size_t conv_index = 0;
    const spectral::GaussianMaskSpec mask{0.0, 0.0, config.mask_sigma};
    auto unit = [&](ConvLayer layer) -> ConvUnit {
        const bool replace = filter && conv_index < config.replaced_layers;
        ++conv_index;
        if (replace) return FrequencyFilterConv(std::move(layer), mask);
        return layer;
    };

    net.stem = unit(detail::make_conv("stem.conv", config.in_channels, config.widths[0], 3, 1, 1, seed));
    net.stem_bn = BatchNormLayer(config.widths[0]);
    std::size_t in = config.widths[0];
    for (std::size_t s = 0; s < config.widths.size(); ++s) {
        const std::size_t width = config.widths[s];
        for (std::size_t b = 0; b < config.blocks_per_stage; ++b) {
            const std::string p = net.block_name(s * config.blocks_per_stage + b);
            const std::size_t stride = (s > 0 && b == 0) ? 2 : 1;
            ResidualBlock block;
            block.conv1 = unit(detail::make_conv(p + ".conv1", in, width, 3, stride, 1, seed));
            block.bn1 = BatchNormLayer(width);
            block.conv2 = unit(detail::make_conv(p + ".conv2", width, width, 3, 1, 1, seed));
            block.bn2 = BatchNormLayer(width);
            if (stride != 1 || in != width) {
                block.shortcut = unit(detail::make_conv(p + ".shortcut", in, width, 1, stride, 0, seed));
                block.shortcut_bn = BatchNormLayer(width);
            }
            net.blocks.push_back(std::move(block));
            in = width;
        }
    }
    net.classifier = detail::make_linear("classifier", in, config.num_classes, seed);
    net.projection = detail::make_linear("projection", in, config.projection_dim, seed);
    return net;
}

/// Pooled penultimate features [N, C_last].
inline Tensor forward_features(Network& net, const Tensor& x, Mode mode, const ConvTap& tap = {}) {
    const ModelConfig& cfg = net.config;
    if (x.rank() != 4 || x.dim(1) != cfg.in_channels || x.dim(2) != cfg.in_height || x.dim(3) != cfg.in_width) {
        throw DimensionError("model input " + shape_str(x.shape()) + " does not match configured [N," +
                             std::to_string(cfg.in_channels) + "," + std::to_string(cfg.in_height) + "," +
                             std::to_string(cfg.in_width) + "]");
    }
    std::size_t conv_index = 0;
    auto conv = [&](ConvUnit& u, const Tensor& in) {
        Tensor out = forward(u, in, mode);
        if (tap) tap(conv_index, out);
        ++conv_index;
        return out;
    };

    Tensor h = relu(batch_norm_forward(net.stem_bn, conv(net.stem, x), mode));
    for (auto& block : net.blocks) {
        Tensor y = relu(batch_norm_forward(block.bn1, conv(block.conv1, h), mode));
        y = batch_norm_forward(block.bn2, conv(block.conv2, y), mode);
        Tensor skip = h;
        if (block.shortcut) skip = batch_norm_forward(*block.shortcut_bn, conv(*block.shortcut, h), mode);
        h = relu(add(y, skip));
    }
    return global_avg_pool(h);
}

inline Tensor forward_logits(Network& net, const Tensor& x, Mode mode) {
    return linear_forward(net.classifier, forward_features(net, x, mode));
}

/// Both heads read the same pooled feature.
inline DualHeadOutput forward_dual_head(Network& net, const Tensor& x, Mode mode) {
    Tensor features = forward_features(net, x, mode);
    DualHeadOutput out;
    out.logits = linear_forward(net.classifier, features);
    out.projection = l2_normalize_rows(linear_forward(net.projection, features));
    out.features = std::move(features);
    return out;
}

inline std::vector<ActivationPair> drain_aux_pairs(Network& net) { return drain_aux_pairs(net.conv_units()); }

/// Parameter count implied by a configuration.
inline std::size_t expected_parameter_count(const ModelConfig& cfg) {
    auto conv = [](std::size_t in, std::size_t out, std::size_t k) { return out * in * k * k + out; };
    auto bn = [](std::size_t c) { return 2 * c; };
    std::size_t n = conv(cfg.in_channels, cfg.widths[0], 3) + bn(cfg.widths[0]);
    std::size_t in = cfg.widths[0];
    for (std::size_t s = 0; s < cfg.widths.size(); ++s) {
        for (std::size_t b = 0; b < cfg.blocks_per_stage; ++b) {
            const std::size_t w = cfg.widths[s];
            n += conv(in, w, 3) + bn(w) + conv(w, w, 3) + bn(w);
            if ((s > 0 && b == 0) || in != w) n += conv(in, w, 1) + bn(w);
            in = w;
        }
    }
    n += in * cfg.num_classes + cfg.num_classes;
    n += in * cfg.projection_dim + cfg.projection_dim;
    return n;
}

}  // namespace frqreg
