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
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "frqreg/layers.hpp"
#include "frqreg/tensor.hpp"

namespace frqreg {

struct LossWeights {
    double lambda = 0.2;  // auxiliary MSE weight
    double alpha = 1.0;   // contrastive weight
    double tau = 0.1;     // contrastive temperature

    void validate() const {
        if (!(tau > 0.0) || !std::isfinite(tau)) throw ParameterError("tau must be positive and finite");
        if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ParameterError("lambda must be finite and >= 0");
        if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ParameterError("alpha must be finite and >= 0");
    }
};

/// Mean over the batch of -log softmax(logits)[label].
inline Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
    if (logits.rank() != 2) throw DimensionError("cross_entropy expects [B,K] logits");
    const std::size_t B = logits.dim(0), K = logits.dim(1);
    if (labels.size() != B) throw DimensionError("cross_entropy: label count does not match batch");
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= K) {
            throw LabelError("label " + std::to_string(y) + " outside [0," + std::to_string(K) + ")");
        }
    }
    auto probs = std::make_shared<std::vector<double>>(B * K);
    std::vector<int> ys(labels.begin(), labels.end());
    const auto z = logits.data();
    double loss = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
        const double* row = z.data() + i * K;
        double mx = row[0];
        for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, row[k]);
        double s = 0.0;
        for (std::size_t k = 0; k < K; ++k) s += std::exp(row[k] - mx);
        const double lse = mx + std::log(s);
        loss += lse - row[ys[i]];
        for (std::size_t k = 0; k < K; ++k) (*probs)[i * K + k] = std::exp(row[k] - lse);
    }
    loss /= static_cast<double>(B);
    return detail::make_op("cross_entropy", {1}, {loss}, {logits}, [=](detail::Node& nd) {
        auto& in = *nd.inputs[0];
        const double g = nd.grad[0] / static_cast<double>(B);
        for (std::size_t i = 0; i < B; ++i) {
            for (std::size_t k = 0; k < K; ++k) {
                const double indicator = static_cast<std::size_t>(ys[i]) == k ? 1.0 : 0.0;
                in.grad[i * K + k] += g * ((*probs)[i * K + k] - indicator);
            }
        }
    });
}

inline Tensor mse(const Tensor& a, const Tensor& b) { return mean(square(sub(a, b))); }

/// Sum over pairs of mean((a_x - a_x')^2). An empty list gives exactly 0.
inline Tensor aux_mse_total(const std::vector<ActivationPair>& pairs) {
    if (pairs.empty()) return Tensor::scalar(0.0);
    Tensor total;
    for (const ActivationPair& p : pairs) {
        detail::require_same_shape(p.a_x, p.a_x_prime, "aux_mse_total");
        Tensor term = mse(p.a_x, p.a_x_prime);
        total = total.defined() ? add(total, term) : term;
    }
    return total;
}

/// Embeddings plus labels for the contrastive objective.
struct LabeledBatch {
    Tensor embeddings;  // [B,D], unit rows
    std::vector<int> labels;

    void validate() const {
        if (embeddings.rank() != 2) throw DimensionError("LabeledBatch embeddings must be [B,D]");
        const std::size_t B = embeddings.dim(0), D = embeddings.dim(1);
        if (labels.size() != B) throw DimensionError("LabeledBatch: label count does not match batch");
        if (B < 2) throw DegenerateBatchError("supervised contrastive loss needs at least 2 samples");
        const auto f = embeddings.data();
        for (std::size_t i = 0; i < B; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < D; ++j) s += f[i * D + j] * f[i * D + j];
            if (std::abs(std::sqrt(s) - 1.0) > 1e-9) {
                throw ContractError("embedding row " + std::to_string(i) + " is not unit-norm");
            }
        }
    }
};

/// Result of the contrastive loss: the raw sum over anchors (differentiable)
/// and the per-anchor mean over anchors that have positives, for logging.
struct SupConResult {
    Tensor loss;
    double mean_per_anchor = 0.0;
    std::size_t anchors_with_positives = 0;
};

/// Supervised contrastive loss summed over anchors i:
///   -1/|P(i)| * sum_{p in P(i)} log( exp(s_ip) / sum_{a != i} exp(s_ia) ),
/// with s_ij = f_i . f_j / tau. Anchors without positives contribute 0.
inline SupConResult supcon_loss_detailed(const LabeledBatch& batch, double tau) {
    if (!(tau > 0.0)) throw ParameterError("tau must be positive");
    batch.validate();
    const Tensor& emb = batch.embeddings;
    const std::size_t B = emb.dim(0), D = emb.dim(1);
    const auto f = emb.data();

    std::vector<double> sim(B * B);
    for (std::size_t i = 0; i < B; ++i) {
        for (std::size_t j = 0; j < B; ++j) {
            double d = 0.0;
            for (std::size_t t = 0; t < D; ++t) d += f[i * D + t] * f[j * D + t];
            sim[i * B + j] = d / tau;
        }
    }

    // coeff[i*B+a] = dL/ds_ia
    auto coeff = std::make_shared<std::vector<double>>(B * B, 0.0);
    double loss = 0.0;
    std::size_t with_pos = 0;
    for (std::size_t i = 0; i < B; ++i) {
        std::size_t npos = 0;
        for (std::size_t p = 0; p < B; ++p) {
            if (p != i && batch.labels[p] == batch.labels[i]) ++npos;
        }
        if (npos == 0) continue;
        ++with_pos;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < B; ++a) {
            if (a != i) mx = std::max(mx, sim[i * B + a]);
        }
        double s = 0.0;
        for (std::size_t a = 0; a < B; ++a) {
            if (a != i) s += std::exp(sim[i * B + a] - mx);
        }
        const double lse = mx + std::log(s);
        const double inv_pos = 1.0 / static_cast<double>(npos);
        double term = 0.0;
        for (std::size_t p = 0; p < B; ++p) {
            if (p != i && batch.labels[p] == batch.labels[i]) term += sim[i * B + p] - lse;
        }
        loss += -inv_pos * term;
        for (std::size_t a = 0; a < B; ++a) {
            if (a == i) continue;
            const double softmax = std::exp(sim[i * B + a] - lse);
            const double positive = batch.labels[a] == batch.labels[i] ? inv_pos : 0.0;
            (*coeff)[i * B + a] = softmax - positive;
        }
    }

    SupConResult result;
    result.anchors_with_positives = with_pos;
    result.mean_per_anchor = with_pos ? loss / static_cast<double>(with_pos) : 0.0;
    result.loss = detail::make_op("supcon", {1}, {loss}, {emb}, [=](detail::Node& nd) {
        auto& in = *nd.inputs[0];
        const double g = nd.grad[0] / tau;
        // dL/df_i = sum_a (c_ia + c_ai) f_a / tau
        for (std::size_t i = 0; i < B; ++i) {
            for (std::size_t a = 0; a < B; ++a) {
                const double c = ((*coeff)[i * B + a] + (*coeff)[a * B + i]) * g;
                if (c == 0.0) continue;
                for (std::size_t t = 0; t < D; ++t) in.grad[i * D + t] += c * in.data[a * D + t];
            }
        }
    });
    return result;
}

inline Tensor supcon_loss(const LabeledBatch& batch, double tau) { return supcon_loss_detailed(batch, tau).loss; }

namespace detail {
inline void require_scalar(const Tensor& t, const char* what) {
    if (t.numel() != 1) throw DimensionError(std::string(what) + " must be a scalar");
}
}  // namespace detail

/// ce + lambda * aux
inline Tensor total_loss_freq(const Tensor& ce, const Tensor& aux, const LossWeights& w) {
    detail::require_scalar(ce, "ce");
    detail::require_scalar(aux, "aux");
    return add(ce, scale(aux, w.lambda));
}

/// ce + alpha * supcon
inline Tensor total_loss_supcon(const Tensor& ce, const Tensor& supcon, const LossWeights& w) {
    detail::require_scalar(ce, "ce");
    detail::require_scalar(supcon, "supcon");
    return add(ce, scale(supcon, w.alpha));
}

}  // namespace frqreg
