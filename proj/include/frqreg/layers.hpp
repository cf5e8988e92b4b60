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

#include <cmath>
#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include "frqreg/spectral.hpp"
#include "frqreg/tensor.hpp"

namespace frqreg {

enum class Mode { train, eval };

/// Applies the Gaussian low-pass reconstruction to every (sample, channel)
/// plane of an [N,C,H,W] tensor. Planes whose sides are not powers of two are
/// zero-padded and center-cropped. The map is linear and, for a mask centered
/// at DC, self-adjoint, so the backward pass filters the incoming gradient
/// with the same mask.
inline Tensor lowpass_planes(const Tensor& x, const spectral::GaussianMaskSpec& mask) {
    if (x.rank() != 4) throw DimensionError("lowpass_planes expects [N,C,H,W], got " + shape_str(x.shape()));
    if (mask.center_u != 0.0 || mask.center_v != 0.0) {
        throw ParameterError("lowpass_planes: an off-center mask does not map real planes to real planes");
    }
    const std::size_t H = x.dim(2), W = x.dim(3);
    const std::size_t planes = x.dim(0) * x.dim(1);
    auto filter_all = [=](std::span<const double> in, std::vector<double>& out, bool accumulate) {
        spectral::Image2D plane(H, W);
        for (std::size_t p = 0; p < planes; ++p) {
            std::copy_n(in.begin() + p * H * W, H * W, plane.values.begin());
            const spectral::Image2D filtered = spectral::lowpass_reconstruct_padded(plane, mask);
            for (std::size_t i = 0; i < H * W; ++i) {
                if (accumulate) {
                    out[p * H * W + i] += filtered.values[i];
                } else {
                    out[p * H * W + i] = filtered.values[i];
                }
            }
        }
    };
    std::vector<double> out(x.numel());
    filter_all(x.data(), out, false);
    return detail::make_op("lowpass_planes", x.shape(), std::move(out), {x},
                           [filter_all](detail::Node& n) { filter_all(n.grad, n.inputs[0]->grad, true); });
}

// ---------------------------------------------------------------------------

struct ConvLayer {
    Tensor weight;  // [K,C,kh,kw]
    Tensor bias;    // [K]
    std::size_t stride = 1;
    std::size_t padding = 0;

    ConvLayer() = default;
    ConvLayer(Tensor w, Tensor b, std::size_t stride_, std::size_t padding_)
        : weight(std::move(w)), bias(std::move(b)), stride(stride_), padding(padding_) {
        if (weight.rank() != 4) throw DimensionError("ConvLayer weight must be rank 4");
        if (bias.rank() != 1 || bias.dim(0) != weight.dim(0)) throw DimensionError("ConvLayer bias must be [K]");
        weight.set_requires_grad(true);
        bias.set_requires_grad(true);
    }

    std::size_t in_channels() const { return weight.dim(1); }
    std::size_t out_channels() const { return weight.dim(0); }

    ConvLayer clone() const { return ConvLayer(weight.clone(), bias.clone(), stride, padding); }
};

inline Tensor conv_layer_forward(const ConvLayer& layer, const Tensor& x) {
    return conv2d(x, layer.weight, layer.bias, layer.stride, layer.padding);
}

struct ActivationPair {
    Tensor a_x;
    Tensor a_x_prime;
};

/// Dual-path convolution: one weight set applied to the input and to its
/// low-frequency reconstruction. Only the main path feeds downstream layers;
/// the pair is parked here until the training loop drains it.
class FrequencyFilterConv {
public:
    FrequencyFilterConv() = default;
    FrequencyFilterConv(ConvLayer inner, spectral::GaussianMaskSpec mask) : inner_(std::move(inner)), mask_(mask) {
        if (!(mask_.sigma > 0.0)) throw ParameterError("FrequencyFilterConv: sigma must be positive");
    }

    const ConvLayer& inner() const { return inner_; }
    ConvLayer& inner() { return inner_; }
    const spectral::GaussianMaskSpec& mask() const { return mask_; }
    const std::optional<ActivationPair>& cached_pair() const { return cached_; }

    Tensor forward(const Tensor& x, Mode mode) {
        if (x.rank() != 4 || x.dim(2) < 2 || x.dim(3) < 2) {
            throw DimensionError("FrequencyFilterConv needs [N,C,H,W] with H,W >= 2, got " + shape_str(x.shape()));
        }
        Tensor a_x = conv_layer_forward(inner_, x);
        if (mode == Mode::eval) return a_x;
        if (cached_) throw ContractError("FrequencyFilterConv: cached activation pair was never drained");
        Tensor filtered = lowpass_planes(x, mask_);
        Tensor a_x_prime = conv_layer_forward(inner_, filtered);
        cached_ = ActivationPair{a_x, std::move(a_x_prime)};
        return a_x;
    }

    std::optional<ActivationPair> take_pair() {
        std::optional<ActivationPair> out = std::move(cached_);
        cached_.reset();
        return out;
    }

    void clear_cache() { cached_.reset(); }

    FrequencyFilterConv clone() const { return FrequencyFilterConv(inner_.clone(), mask_); }

private:
    ConvLayer inner_;
    spectral::GaussianMaskSpec mask_;
    std::optional<ActivationPair> cached_;
};

inline Tensor freq_filter_conv_forward(FrequencyFilterConv& layer, const Tensor& x, Mode mode) {
    return layer.forward(x, mode);
}

/// A conv slot in a network: either a plain conv or its dual-path substitute.
using ConvUnit = std::variant<ConvLayer, FrequencyFilterConv>;

inline Tensor forward(ConvUnit& unit, const Tensor& x, Mode mode) {
    return std::visit(
        [&](auto& layer) -> Tensor {
            using T = std::decay_t<decltype(layer)>;
            if constexpr (std::is_same_v<T, ConvLayer>) {
                return conv_layer_forward(layer, x);
            } else {
                return layer.forward(x, mode);
            }
        },
        unit);
}

inline const ConvLayer& conv_of(const ConvUnit& unit) {
    if (const auto* f = std::get_if<FrequencyFilterConv>(&unit)) return f->inner();
    return std::get<ConvLayer>(unit);
}

inline ConvLayer& conv_of(ConvUnit& unit) {
    if (auto* f = std::get_if<FrequencyFilterConv>(&unit)) return f->inner();
    return std::get<ConvLayer>(unit);
}

inline bool is_frequency_filtered(const ConvUnit& unit) { return std::holds_alternative<FrequencyFilterConv>(unit); }

inline ConvUnit clone_unit(const ConvUnit& unit) {
    return std::visit([](const auto& layer) -> ConvUnit { return layer.clone(); }, unit);
}

/// Collects the cached pairs in the given order and clears every cache.
/// Plain conv units and empty caches contribute nothing.
inline std::vector<ActivationPair> drain_aux_pairs(const std::vector<ConvUnit*>& units) {
    std::vector<ActivationPair> pairs;
    for (ConvUnit* unit : units) {
        if (auto* f = std::get_if<FrequencyFilterConv>(unit)) {
            if (auto pair = f->take_pair()) pairs.push_back(std::move(*pair));
        }
    }
    return pairs;
}

// ---------------------------------------------------------------------------

struct BatchNormLayer {
    Tensor gamma;  // [C]
    Tensor beta;   // [C]
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double momentum = 0.1;
    double epsilon = 1e-5;

    BatchNormLayer() = default;
    explicit BatchNormLayer(std::size_t channels)
        : gamma(Tensor::full({channels}, 1.0, true)),
          beta(Tensor::zeros({channels}, true)),
          running_mean(channels, 0.0),
          running_var(channels, 1.0) {}

    std::size_t channels() const { return running_mean.size(); }

    BatchNormLayer clone() const {
        BatchNormLayer out;
        out.gamma = gamma.clone();
        out.beta = beta.clone();
        out.running_mean = running_mean;
        out.running_var = running_var;
        out.momentum = momentum;
        out.epsilon = epsilon;
        return out;
    }
};

/// Per-channel standardization over (N,H,W). Train mode uses batch statistics
/// and updates the running estimates (unbiased variance); eval mode uses the
/// running estimates only.
inline Tensor batch_norm_forward(BatchNormLayer& layer, const Tensor& x, Mode mode) {
    if (x.rank() != 4) throw DimensionError("batch_norm expects [N,C,H,W], got " + shape_str(x.shape()));
    const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    if (C != layer.channels()) {
        throw DimensionError("batch_norm: " + std::to_string(C) + " channels, layer has " +
                             std::to_string(layer.channels()));
    }
    const std::size_t M = N * HW;
    if (mode == Mode::train && M < 2) throw DegenerateBatchError("batch_norm needs N*H*W >= 2 in train mode");

    const auto in = x.data();
    const auto g = layer.gamma.data();
    const auto b = layer.beta.data();
    auto inv_std = std::make_shared<std::vector<double>>(C);
    auto xhat = std::make_shared<std::vector<double>>(x.numel());
    std::vector<double> out(x.numel());
    for (std::size_t c = 0; c < C; ++c) {
        double mu = 0.0, var = 0.0;
        if (mode == Mode::train) {
            for (std::size_t n = 0; n < N; ++n) {
                const double* p = in.data() + (n * C + c) * HW;
                for (std::size_t i = 0; i < HW; ++i) mu += p[i];
            }
            mu /= static_cast<double>(M);
            for (std::size_t n = 0; n < N; ++n) {
                const double* p = in.data() + (n * C + c) * HW;
                for (std::size_t i = 0; i < HW; ++i) var += (p[i] - mu) * (p[i] - mu);
            }
            var /= static_cast<double>(M);
            layer.running_mean[c] = (1.0 - layer.momentum) * layer.running_mean[c] + layer.momentum * mu;
            layer.running_var[c] = (1.0 - layer.momentum) * layer.running_var[c] +
                                   layer.momentum * var * static_cast<double>(M) / static_cast<double>(M - 1);
        } else {
            mu = layer.running_mean[c];
            var = layer.running_var[c];
        }
        const double inv = 1.0 / std::sqrt(var + layer.epsilon);
        (*inv_std)[c] = inv;
        for (std::size_t n = 0; n < N; ++n) {
            const std::size_t base = (n * C + c) * HW;
            for (std::size_t i = 0; i < HW; ++i) {
                const double h = (in[base + i] - mu) * inv;
                (*xhat)[base + i] = h;
                out[base + i] = g[c] * h + b[c];
            }
        }
    }

    const bool train = mode == Mode::train;
    return detail::make_op(
        "batch_norm", x.shape(), std::move(out), {x, layer.gamma, layer.beta},
        [=](detail::Node& nd) {
            auto& xin = *nd.inputs[0];
            auto& gam = *nd.inputs[1];
            auto& bet = *nd.inputs[2];
            const double m = static_cast<double>(M);
            for (std::size_t c = 0; c < C; ++c) {
                double sum_g = 0.0, sum_gx = 0.0;
                for (std::size_t n = 0; n < N; ++n) {
                    const std::size_t base = (n * C + c) * HW;
                    for (std::size_t i = 0; i < HW; ++i) {
                        sum_g += nd.grad[base + i];
                        sum_gx += nd.grad[base + i] * (*xhat)[base + i];
                    }
                }
                if (bet.requires_grad) bet.grad[c] += sum_g;
                if (gam.requires_grad) gam.grad[c] += sum_gx;
                if (!xin.requires_grad) continue;
                const double k = gam.data[c] * (*inv_std)[c];
                for (std::size_t n = 0; n < N; ++n) {
                    const std::size_t base = (n * C + c) * HW;
                    for (std::size_t i = 0; i < HW; ++i) {
                        if (train) {
                            xin.grad[base + i] +=
                                k / m * (m * nd.grad[base + i] - sum_g - (*xhat)[base + i] * sum_gx);
                        } else {
                            xin.grad[base + i] += k * nd.grad[base + i];
                        }
                    }
                }
            }
        });
}

// ---------------------------------------------------------------------------

struct LinearLayer {
    Tensor weight;  // [in, out]
    Tensor bias;    // [out]

    LinearLayer() = default;
    LinearLayer(Tensor w, Tensor b) : weight(std::move(w)), bias(std::move(b)) {
        if (weight.rank() != 2 || bias.rank() != 1 || bias.dim(0) != weight.dim(1)) {
            throw DimensionError("LinearLayer expects weight [in,out] and bias [out]");
        }
        weight.set_requires_grad(true);
        bias.set_requires_grad(true);
    }

    LinearLayer clone() const { return LinearLayer(weight.clone(), bias.clone()); }
};

inline Tensor linear_forward(const LinearLayer& layer, const Tensor& x) {
    return add(matmul(x, layer.weight), expand_rows(layer.bias, x.dim(0)));
}

/// Norms below this are clamped, so an all-zero row maps to zero instead of
/// dividing by zero.
inline constexpr double kNormalizeEpsilon = 1e-12;

/// Scales each row of [N,D] to unit L2 norm (x / max(|x|, eps)).
inline Tensor l2_normalize_rows(const Tensor& x) {
    if (x.rank() != 2) throw DimensionError("l2_normalize_rows expects rank 2");
    const std::size_t N = x.dim(0), D = x.dim(1);
    auto norms = std::make_shared<std::vector<double>>(N);
    auto clamped = std::make_shared<std::vector<char>>(N, 0);
    std::vector<double> out(x.numel());
    const auto in = x.data();
    for (std::size_t r = 0; r < N; ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < D; ++j) s += in[r * D + j] * in[r * D + j];
        const double raw = std::sqrt(s);
        if (!std::isfinite(raw)) throw NumericError("l2_normalize_rows: non-finite row");
        const double norm = std::max(raw, kNormalizeEpsilon);
        (*clamped)[r] = raw < kNormalizeEpsilon;
        (*norms)[r] = norm;
        for (std::size_t j = 0; j < D; ++j) out[r * D + j] = in[r * D + j] / norm;
    }
    return detail::make_op("l2_normalize_rows", x.shape(), std::move(out), {x}, [N, D, norms, clamped](detail::Node& nd) {
        auto& xin = *nd.inputs[0];
        for (std::size_t r = 0; r < N; ++r) {
            const double* y = nd.data.data() + r * D;
            const double* g = nd.grad.data() + r * D;
            if ((*clamped)[r]) {
                // Clamped row: the map is a plain scaling.
                for (std::size_t j = 0; j < D; ++j) xin.grad[r * D + j] += g[j] / (*norms)[r];
                continue;
            }
            double dot = 0.0;
            for (std::size_t j = 0; j < D; ++j) dot += y[j] * g[j];
            for (std::size_t j = 0; j < D; ++j) xin.grad[r * D + j] += (g[j] - y[j] * dot) / (*norms)[r];
        }
    });
}

/// [N,C,H,W] -> [N,C]
inline Tensor global_avg_pool(const Tensor& x) {
    if (x.rank() != 4) throw DimensionError("global_avg_pool expects [N,C,H,W]");
    return mean(x, {2, 3});
}

}  // namespace frqreg
