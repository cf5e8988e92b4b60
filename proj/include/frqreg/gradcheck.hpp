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

// Central finite-difference checks of the reverse-mode gradients.
//
// For each checked input the error is measured in max-norm relative to the
// gradient's own scale:
//     max_i |analytic_i - numeric_i| / max(max_i |analytic_i|, max_i |numeric_i|, 1e-6)
// so a uniformly mis-scaled gradient (e.g. x1.01) shows up as ~1e-2 while
// round-off on near-zero entries does not dominate. The 1e-6 floor sits well
// above the central-difference round-off (~1e-16 * |f| / epsilon ~ 1e-11) so
// inputs whose true gradient is exactly zero (a conv bias feeding batch norm)
// are judged on an absolute scale.

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "frqreg/error.hpp"
#include "frqreg/layers.hpp"
#include "frqreg/losses.hpp"
#include "frqreg/model.hpp"
#include "frqreg/rng.hpp"
#include "frqreg/tensor.hpp"

namespace frqreg {

struct GradCheckEntry {
    std::string op;
    std::string input;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;

    bool passed() const {
        return std::all_of(entries.begin(), entries.end(), [](const GradCheckEntry& e) { return e.passed; });
    }
    double max_rel_error() const {
        double m = 0.0;
        for (const auto& e : entries) m = std::max(m, e.max_rel_error);
        return m;
    }
    void append(const GradCheckReport& other) { entries.insert(entries.end(), other.entries.begin(), other.entries.end()); }
};

using NamedInputs = std::vector<std::pair<std::string, Tensor>>;

/// Compares the analytic gradient of scalar `f` with respect to each input
/// against central differences. `f` must read the inputs through the given
/// handles, which are perturbed in place and restored afterwards.
inline GradCheckReport grad_check(const std::string& op, const std::function<Tensor()>& f, const NamedInputs& inputs,
                                  double epsilon = 1e-5, double tolerance = 1e-4) {
    if (!(epsilon > 0.0)) throw ParameterError("grad_check: epsilon must be positive");
    auto eval = [&]() {
        Tensor y = f();
        if (y.numel() != 1) throw ContractError("grad_check: function is not scalar-valued");
        const double v = y.item();
        if (!std::isfinite(v)) throw NumericError("grad_check(" + op + "): non-finite function value");
        return v;
    };

    for (auto [name, t] : inputs) {
        if (!t.requires_grad()) throw ContractError("grad_check: input '" + name + "' does not require grad");
        t.zero_grad();
    }
    {
        Tensor y = f();
        if (!std::isfinite(y.item())) throw NumericError("grad_check(" + op + "): non-finite function value");
        backward(y);
    }

    GradCheckReport report;
    for (auto [name, t] : inputs) {
        const std::vector<double> analytic = t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                                                          : std::vector<double>(t.numel(), 0.0);
        std::vector<double> numeric(t.numel());
        auto data = t.mutable_data();
        for (std::size_t i = 0; i < t.numel(); ++i) {
            const double saved = data[i];
            data[i] = saved + epsilon;
            const double up = eval();
            data[i] = saved - epsilon;
            const double down = eval();
            data[i] = saved;
            numeric[i] = (up - down) / (2.0 * epsilon);
        }
        double diff = 0.0, scale = 1e-6;
        for (std::size_t i = 0; i < numeric.size(); ++i) {
            diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
            scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
        }
        const double rel = diff / scale;
        report.entries.push_back({op, name, rel, tolerance, rel < tolerance});
    }
    for (auto [name, t] : inputs) t.zero_grad();
    return report;
}

namespace gradcheck_detail {

/// Uniform values in [-1,1] that stay at least `margin` away from zero, so
/// ReLU kinks are not crossed by the finite-difference step.
inline Tensor random_param(const CounterRng& rng, Shape shape, double margin = 0.0) {
    std::vector<double> v(shape_numel(shape));
    for (std::size_t i = 0; i < v.size(); ++i) {
        double x = 2.0 * rng.uniform(i) - 1.0;
        if (margin > 0.0 && std::abs(x) < margin) x = x < 0.0 ? -margin : margin;
        v[i] = x;
    }
    return Tensor::from_data(std::move(shape), std::move(v), true);
}

/// Fixed linear readout so vector-valued ops reduce to a scalar with a
/// non-trivial upstream gradient.
inline Tensor readout(const Tensor& y, const CounterRng& rng) {
    std::vector<double> w(y.numel());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = 2.0 * rng.uniform(i) - 1.0;
    return sum(mul(y, Tensor::from_data(y.shape(), std::move(w))));
}

}  // namespace gradcheck_detail

/// Finite-difference suite over every differentiable op and the end-to-end
/// composite. Component checks use `tolerance`; the end-to-end check uses
/// ten times that (deep compositions accumulate more truncation error).
inline GradCheckReport gradcheck_suite(double tolerance = 1e-4, double epsilon = 1e-5) {
    using gradcheck_detail::random_param;
    using gradcheck_detail::readout;
    const CounterRng root(20240917, fnv1a("gradcheck"));
    std::size_t stream = 0;
    auto next = [&]() { return root.fork(stream++); };
    GradCheckReport report;
    auto check = [&](const std::string& op, const std::function<Tensor()>& f, const NamedInputs& in, double tol) {
        report.append(grad_check(op, f, in, epsilon, tol));
    };

    // ---- tensor ops
    {
        Tensor a = random_param(next(), {3, 4}), b = random_param(next(), {3, 4});
        const CounterRng r = next();
        check("add", [&] { return readout(add(a, b), r); }, {{"a", a}, {"b", b}}, tolerance);
        check("sub", [&] { return readout(sub(a, b), r); }, {{"a", a}, {"b", b}}, tolerance);
        check("mul", [&] { return readout(mul(a, b), r); }, {{"a", a}, {"b", b}}, tolerance);
        check("scale", [&] { return readout(scale(a, -1.7), r); }, {{"a", a}}, tolerance);
        check("square", [&] { return readout(square(a), r); }, {{"a", a}}, tolerance);
    }
    {
        Tensor a = random_param(next(), {2, 3, 4}, 1e-2);
        const CounterRng r = next();
        check("relu", [&] { return readout(relu(a), r); }, {{"x", a}}, tolerance);
        check("reshape", [&] { return readout(reshape(a, {6, 4}), r); }, {{"x", a}}, tolerance);
        check("sum", [&] { return readout(sum(a, {1}), r); }, {{"x", a}}, tolerance);
        check("sum_all", [&] { return sum(square(a)); }, {{"x", a}}, tolerance);
        check("mean", [&] { return readout(mean(a, {0, 2}), r); }, {{"x", a}}, tolerance);
        check("mean_all", [&] { return mean(square(a)); }, {{"x", a}}, tolerance);
    }
    {
        Tensor row = random_param(next(), {5});
        const CounterRng r = next();
        check("expand_rows", [&] { return readout(expand_rows(row, 3), r); }, {{"row", row}}, tolerance);
    }
    {
        Tensor a = random_param(next(), {3, 4}), b = random_param(next(), {4, 5});
        const CounterRng r = next();
        check("matmul", [&] { return readout(matmul(a, b), r); }, {{"a", a}, {"b", b}}, tolerance);
    }
    {
        Tensor x = random_param(next(), {2, 2, 5, 5}), w = random_param(next(), {3, 2, 3, 3}),
               bias = random_param(next(), {3});
        const CounterRng r = next();
        check("conv2d", [&] { return readout(conv2d(x, w, bias, 1, 1), r); },
              {{"input", x}, {"weight", w}, {"bias", bias}}, tolerance);
        check("conv2d_stride2", [&] { return readout(conv2d(x, w, bias, 2, 1), r); },
              {{"input", x}, {"weight", w}, {"bias", bias}}, tolerance);
        check("conv2d_nopad", [&] { return readout(conv2d(x, w, Tensor(), 1, 0), r); },
              {{"input", x}, {"weight", w}}, tolerance);
    }

    // ---- layers
    {
        Tensor x = random_param(next(), {2, 2, 8, 8});
        const CounterRng r = next();
        const spectral::GaussianMaskSpec mask{0.0, 0.0, 0.15};
        check("lowpass_planes", [&] { return readout(lowpass_planes(x, mask), r); }, {{"x", x}}, tolerance);
    }
    {
        Tensor x = random_param(next(), {2, 2, 8, 8});
        FrequencyFilterConv layer(ConvLayer(random_param(next(), {3, 2, 3, 3}), random_param(next(), {3}), 1, 1),
                                  spectral::GaussianMaskSpec{0.0, 0.0, 0.15});
        const CounterRng r = next();
        auto f = [&] {
            Tensor main = layer.forward(x, Mode::train);
            auto pair = layer.take_pair();
            return add(readout(main, r), aux_mse_total({*pair}));
        };
        check("freq_filter_conv", f,
              {{"input", x}, {"weight", layer.inner().weight}, {"bias", layer.inner().bias}}, tolerance);
    }
    {
        Tensor x = random_param(next(), {4, 3, 3, 3});
        BatchNormLayer bn(3);
        bn.gamma = random_param(next(), {3});
        bn.beta = random_param(next(), {3});
        const CounterRng r = next();
        check("batch_norm_train", [&] { return readout(batch_norm_forward(bn, x, Mode::train), r); },
              {{"x", x}, {"gamma", bn.gamma}, {"beta", bn.beta}}, tolerance);
        bn.running_mean = {0.1, -0.2, 0.3};
        bn.running_var = {0.5, 1.5, 0.9};
        check("batch_norm_eval", [&] { return readout(batch_norm_forward(bn, x, Mode::eval), r); },
              {{"x", x}, {"gamma", bn.gamma}, {"beta", bn.beta}}, tolerance);
    }
    {
        LinearLayer lin(random_param(next(), {4, 3}), random_param(next(), {3}));
        Tensor x = random_param(next(), {5, 4});
        const CounterRng r = next();
        check("linear", [&] { return readout(linear_forward(lin, x), r); },
              {{"x", x}, {"weight", lin.weight}, {"bias", lin.bias}}, tolerance);
    }
    {
        Tensor x = random_param(next(), {4, 5});
        const CounterRng r = next();
        check("l2_normalize_rows", [&] { return readout(l2_normalize_rows(x), r); }, {{"x", x}}, tolerance);
    }
    {
        Tensor x = random_param(next(), {2, 3, 4, 4});
        const CounterRng r = next();
        check("global_avg_pool", [&] { return readout(global_avg_pool(x), r); }, {{"x", x}}, tolerance);
    }

    // ---- losses
    {
        Tensor logits = random_param(next(), {5, 4});
        const std::vector<int> labels{0, 3, 1, 1, 2};
        check("cross_entropy", [&] { return cross_entropy(logits, labels); }, {{"logits", logits}}, tolerance);
    }
    {
        Tensor a = random_param(next(), {2, 3, 4}), b = random_param(next(), {2, 3, 4});
        Tensor c = random_param(next(), {3, 2}), d = random_param(next(), {3, 2});
        check("aux_mse_total", [&] { return aux_mse_total({{a, b}, {c, d}}); },
              {{"a_x[0]", a}, {"a_x'[0]", b}, {"a_x[1]", c}, {"a_x'[1]", d}}, tolerance);
    }
    {
        Tensor raw = random_param(next(), {6, 3});
        const std::vector<int> labels{0, 1, 0, 2, 1, 0};
        for (double tau : {0.1, 0.5}) {
            check("supcon_tau" + std::string(tau == 0.1 ? "0.1" : "0.5"),
                  [&] { return supcon_loss(LabeledBatch{l2_normalize_rows(raw), labels}, tau); }, {{"raw", raw}},
                  tolerance);
        }
    }

    // ---- model: tiny dual-head network, both regularizers active
    {
        ModelConfig cfg;
        cfg.method = Method::both;
        cfg.replaced_layers = 2;
        cfg.widths = {3, 4};
        cfg.blocks_per_stage = 1;
        cfg.num_classes = 3;
        cfg.projection_dim = 4;
        cfg.in_channels = 2;
        cfg.in_height = 8;
        cfg.in_width = 8;
        Network net = build_model(cfg, 7);
        Tensor x = random_param(next(), {4, 2, 8, 8});
        x.set_requires_grad(false);
        const std::vector<int> labels{0, 1, 2, 1};
        const LossWeights w{0.5, 0.3, 0.5};
        auto f = [&] {
            DualHeadOutput out = forward_dual_head(net, x, Mode::train);
            Tensor aux = aux_mse_total(drain_aux_pairs(net));
            Tensor con = supcon_loss(LabeledBatch{out.projection, labels}, w.tau);
            return add(total_loss_freq(cross_entropy(out.logits, labels), aux, w), scale(con, w.alpha));
        };
        NamedInputs params;
        for (auto& [name, t] : net.parameters()) params.emplace_back(name, t);
        check("end_to_end", f, params, tolerance * 10.0);
    }
    return report;
}

inline void print_gradcheck_report(std::ostream& os, const GradCheckReport& report) {
    for (const auto& e : report.entries) {
        os << (e.passed ? "PASS " : "FAIL ") << e.op << " [" << e.input << "] max_rel_error=" << e.max_rel_error
           << " tolerance=" << e.tolerance << '\n';
    }
    os << (report.passed() ? "gradcheck: all checks passed" : "gradcheck: FAILURES present") << " ("
       << report.entries.size() << " checks, worst " << report.max_rel_error() << ")\n";
}

}  // namespace frqreg
