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

// Dense 64-bit tensors with a dynamically recorded reverse-mode tape.
//
// A Tensor is a cheap handle onto a shared node. Every op allocates a new
// node holding its output, the handles of its inputs and a closure that
// pushes the output gradient back into the inputs. Nodes that do not depend
// on any requires_grad leaf record nothing, so evaluation-mode forward passes
// leave no tape behind.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "frqreg/error.hpp"

namespace frqreg {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    // Reads this->grad, accumulates into inputs[i]->grad.
    std::function<void(Node&)> backward;

    bool is_leaf() const { return inputs.empty(); }

    std::vector<double>& ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
        return grad;
    }
};

}  // namespace detail

class Tensor {
public:
    Tensor() = default;

    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false) {
        for (std::size_t d : shape) {
            if (d == 0) throw DimensionError("zero-sized dimension in " + shape_str(shape));
        }
        if (shape_numel(shape) != data.size()) {
            throw DimensionError("shape " + shape_str(shape) + " does not hold " +
                                 std::to_string(data.size()) + " values");
        }
        auto node = std::make_shared<detail::Node>();
        node->shape = std::move(shape);
        node->data = std::move(data);
        node->requires_grad = requires_grad;
        return Tensor(std::move(node));
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        const std::size_t n = shape_numel(shape);
        return from_data(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
    }

    static Tensor full(Shape shape, double value, bool requires_grad = false) {
        const std::size_t n = shape_numel(shape);
        return from_data(std::move(shape), std::vector<double>(n, value), requires_grad);
    }

    static Tensor scalar(double value, bool requires_grad = false) {
        return from_data({1}, {value}, requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node().shape; }
    std::size_t dim(std::size_t i) const { return node().shape.at(i); }
    std::size_t rank() const { return node().shape.size(); }
    std::size_t numel() const { return node().data.size(); }
    bool requires_grad() const { return node().requires_grad; }
    bool is_leaf() const { return node().is_leaf(); }
    const char* op_name() const { return node().op; }

    std::span<const double> data() const { return node().data; }
    const std::vector<double>& values() const { return node().data; }

    /// Writable storage. Only meant for leaves (parameters, inputs); writing
    /// into a recorded intermediate invalidates its consumers' saved state.
    std::span<double> mutable_data() { return node().data; }

    double item() const {
        if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
        return node().data[0];
    }

    double at(std::initializer_list<std::size_t> index) const {
        const auto& s = shape();
        if (index.size() != s.size()) throw DimensionError("index rank mismatch");
        std::size_t flat = 0;
        std::size_t i = 0;
        for (std::size_t v : index) {
            if (v >= s[i]) throw DimensionError("index out of range");
            flat = flat * s[i] + v;
            ++i;
        }
        return node().data[flat];
    }

    bool has_grad() const { return !node().grad.empty(); }
    std::span<const double> grad() const { return node().grad; }
    std::span<double> mutable_grad() { return node().ensure_grad(); }
    void zero_grad() { node().grad.clear(); }
    void set_requires_grad(bool on) {
        if (!is_leaf()) throw ContractError("requires_grad can only be toggled on leaves");
        node().requires_grad = on;
    }

    /// Copy of the values with no tape attached.
    Tensor detach() const { return from_data(shape(), node().data, false); }

    /// Deep copy that keeps the requires_grad flag (for parameter cloning).
    Tensor clone() const { return from_data(shape(), node().data, requires_grad()); }

    bool same_node(const Tensor& other) const { return node_ == other.node_; }

    detail::Node& node() const {
        if (!node_) throw ContractError("use of undefined tensor");
        return *node_;
    }
    const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

namespace detail {

inline bool& grad_recording() {
    thread_local bool enabled = true;
    return enabled;
}

}  // namespace detail

/// Disables tape recording on this thread for its lifetime (inference).
class NoGradGuard {
public:
    NoGradGuard() : previous_(detail::grad_recording()) { detail::grad_recording() = false; }
    ~NoGradGuard() { detail::grad_recording() = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

namespace detail {

/// Builds an op result. The tape entry is only recorded when some input
/// requires a gradient.
inline Tensor make_op(const char* op, Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                      std::function<void(Node&)> backward) {
    Tensor out = Tensor::from_data(std::move(shape), std::move(data), false);
    const bool needs = grad_recording() && std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
    Node& n = out.node();
    n.op = op;
    if (needs) {
        n.requires_grad = true;
        n.inputs.reserve(inputs.size());
        for (const Tensor& t : inputs) n.inputs.push_back(t.node_ptr());
        n.backward = std::move(backward);
    }
    return out;
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()) + " differ");
    }
}

}  // namespace detail

/// The recorded graph reachable from a root, in an order where every input
/// precedes its consumer.
struct Graph {
    std::vector<detail::Node*> nodes;

    static Graph collect(const Tensor& root) {
        Graph g;
        std::unordered_set<const detail::Node*> seen;
        // Iterative post-order DFS.
        std::vector<std::pair<detail::Node*, std::size_t>> stack;
        detail::Node* start = &root.node();
        if (!start->requires_grad) return g;
        stack.emplace_back(start, 0);
        seen.insert(start);
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (next < node->inputs.size()) {
                detail::Node* child = node->inputs[next++].get();
                if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
            } else {
                g.nodes.push_back(node);
                stack.pop_back();
            }
        }
        return g;
    }
};

/// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate across
/// calls; call zero_grad on parameters between optimizer steps.
inline void backward(const Tensor& loss) {
    if (loss.numel() != 1) throw ContractError("backward requires a scalar loss, got " + shape_str(loss.shape()));
    if (!loss.requires_grad()) return;
    Graph graph = Graph::collect(loss);
    for (detail::Node* n : graph.nodes) {
        if (!n->is_leaf()) n->grad.assign(n->data.size(), 0.0);
    }
    loss.node().ensure_grad()[0] += 1.0;
    for (auto it = graph.nodes.rbegin(); it != graph.nodes.rend(); ++it) {
        detail::Node* n = *it;
        if (n->is_leaf() || !n->backward) continue;
        for (auto& in : n->inputs) {
            if (in->requires_grad) in->ensure_grad();
        }
        n->backward(*n);
    }
    // Interior gradients are scratch space.
    for (detail::Node* n : graph.nodes) {
        if (!n->is_leaf()) std::vector<double>().swap(n->grad);
    }
}

// ---------------------------------------------------------------------------
// Elementwise ops. Binary ops require identical shapes.

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "add");
    std::vector<double> out(a.numel());
    const auto x = a.data();
    const auto y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
    return detail::make_op("add", a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
        for (auto& in : n.inputs) {
            if (!in->requires_grad) continue;
            for (std::size_t i = 0; i < n.grad.size(); ++i) in->grad[i] += n.grad[i];
        }
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "sub");
    std::vector<double> out(a.numel());
    const auto x = a.data();
    const auto y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
    return detail::make_op("sub", a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
        if (n.inputs[0]->requires_grad) {
            for (std::size_t i = 0; i < n.grad.size(); ++i) n.inputs[0]->grad[i] += n.grad[i];
        }
        if (n.inputs[1]->requires_grad) {
            for (std::size_t i = 0; i < n.grad.size(); ++i) n.inputs[1]->grad[i] -= n.grad[i];
        }
    });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "mul");
    std::vector<double> out(a.numel());
    const auto x = a.data();
    const auto y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
    return detail::make_op("mul", a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
        auto& l = *n.inputs[0];
        auto& r = *n.inputs[1];
        if (l.requires_grad) {
            for (std::size_t i = 0; i < n.grad.size(); ++i) l.grad[i] += n.grad[i] * r.data[i];
        }
        if (r.requires_grad) {
            for (std::size_t i = 0; i < n.grad.size(); ++i) r.grad[i] += n.grad[i] * l.data[i];
        }
    });
}

inline Tensor scale(const Tensor& a, double factor) {
    std::vector<double> out(a.numel());
    const auto x = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
    return detail::make_op("scale", a.shape(), std::move(out), {a}, [factor](detail::Node& n) {
        auto& in = *n.inputs[0];
        for (std::size_t i = 0; i < n.grad.size(); ++i) in.grad[i] += n.grad[i] * factor;
    });
}

inline Tensor relu(const Tensor& a) {
    std::vector<double> out(a.numel());
    const auto x = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
    return detail::make_op("relu", a.shape(), std::move(out), {a}, [](detail::Node& n) {
        auto& in = *n.inputs[0];
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            if (in.data[i] > 0.0) in.grad[i] += n.grad[i];
        }
    });
}

inline Tensor square(const Tensor& a) { return mul(a, a); }

// ---------------------------------------------------------------------------
// Shape ops.

inline Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw DimensionError("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape));
    }
    std::vector<double> out(a.data().begin(), a.data().end());
    return detail::make_op("reshape", std::move(shape), std::move(out), {a}, [](detail::Node& n) {
        auto& in = *n.inputs[0];
        for (std::size_t i = 0; i < n.grad.size(); ++i) in.grad[i] += n.grad[i];
    });
}

/// Repeats a rank-1 tensor [N] as the rows of an [M, N] matrix.
inline Tensor expand_rows(const Tensor& row, std::size_t rows) {
    if (row.rank() != 1) throw DimensionError("expand_rows expects a rank-1 tensor, got " + shape_str(row.shape()));
    const std::size_t cols = row.numel();
    std::vector<double> out(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) std::copy(row.data().begin(), row.data().end(), out.begin() + r * cols);
    return detail::make_op("expand_rows", {rows, cols}, std::move(out), {row}, [rows, cols](detail::Node& n) {
        auto& in = *n.inputs[0];
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) in.grad[c] += n.grad[r * cols + c];
        }
    });
}

// ---------------------------------------------------------------------------
// Reductions.

namespace detail {

struct ReducePlan {
    Shape out_shape;
    std::vector<std::size_t> out_index;  // flat input index -> flat output index
    std::size_t count = 1;               // elements folded into each output
};

inline ReducePlan plan_reduce(const Shape& shape, const std::vector<std::size_t>& axes) {
    std::vector<bool> reduced(shape.size(), false);
    for (std::size_t ax : axes) {
        if (ax >= shape.size()) {
            throw DimensionError("axis " + std::to_string(ax) + " invalid for shape " + shape_str(shape));
        }
        if (reduced[ax]) throw DimensionError("axis " + std::to_string(ax) + " repeated");
        reduced[ax] = true;
    }
    ReducePlan plan;
    for (std::size_t d = 0; d < shape.size(); ++d) {
        if (reduced[d]) {
            plan.count *= shape[d];
        } else {
            plan.out_shape.push_back(shape[d]);
        }
    }
    if (plan.out_shape.empty()) plan.out_shape.push_back(1);

    const std::size_t n = shape_numel(shape);
    plan.out_index.resize(n);
    std::vector<std::size_t> idx(shape.size(), 0);
    for (std::size_t flat = 0; flat < n; ++flat) {
        std::size_t o = 0;
        for (std::size_t d = 0; d < shape.size(); ++d) {
            if (!reduced[d]) o = o * shape[d] + idx[d];
        }
        plan.out_index[flat] = o;
        for (std::size_t d = shape.size(); d-- > 0;) {
            if (++idx[d] < shape[d]) break;
            idx[d] = 0;
        }
    }
    return plan;
}

inline Tensor reduce_impl(const Tensor& a, const std::vector<std::size_t>& axes, bool mean) {
    auto plan = std::make_shared<ReducePlan>(plan_reduce(a.shape(), axes));
    std::vector<double> out(shape_numel(plan->out_shape), 0.0);
    const auto x = a.data();
    for (std::size_t i = 0; i < x.size(); ++i) out[plan->out_index[i]] += x[i];
    const double factor = mean ? 1.0 / static_cast<double>(plan->count) : 1.0;
    if (mean) {
        for (double& v : out) v *= factor;
    }
    return make_op(mean ? "mean" : "sum", plan->out_shape, std::move(out), {a}, [plan, factor](Node& n) {
        auto& in = *n.inputs[0];
        for (std::size_t i = 0; i < in.grad.size(); ++i) in.grad[i] += n.grad[plan->out_index[i]] * factor;
    });
}

inline std::vector<std::size_t> all_axes(const Tensor& a) {
    std::vector<std::size_t> axes(a.rank());
    std::iota(axes.begin(), axes.end(), std::size_t{0});
    return axes;
}

}  // namespace detail

/// Sum over the listed axes (all axes when empty); reduced axes are dropped.
inline Tensor sum(const Tensor& a, const std::vector<std::size_t>& axes = {}) {
    return detail::reduce_impl(a, axes.empty() ? detail::all_axes(a) : axes, false);
}

inline Tensor mean(const Tensor& a, const std::vector<std::size_t>& axes = {}) {
    return detail::reduce_impl(a, axes.empty() ? detail::all_axes(a) : axes, true);
}

// ---------------------------------------------------------------------------
// Linear algebra.

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) throw DimensionError("matmul expects rank-2 operands");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw DimensionError("matmul inner dimensions " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    std::vector<double> out(m * n, 0.0);
    const auto x = a.data();
    const auto y = b.data();
    for (std::size_t i = 0; i < m; ++i) {
        double* row = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double v = x[i * k + p];
            const double* brow = y.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += v * brow[j];
        }
    }
    return detail::make_op("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& nd) {
        auto& l = *nd.inputs[0];
        auto& r = *nd.inputs[1];
        const double* g = nd.grad.data();
        if (l.requires_grad) {
            // dA = G * B^T
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * r.data[p * n + j];
                    l.grad[i * k + p] += acc;
                }
            }
        }
        if (r.requires_grad) {
            // dB = A^T * G
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const double v = l.data[i * k + p];
                    double* grow = r.grad.data() + p * n;
                    for (std::size_t j = 0; j < n; ++j) grow[j] += v * g[i * n + j];
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Convolution (direct loops, cross-correlation as in every CNN framework).

namespace detail {

// Output positions o in [lo, hi) whose input coordinate o*stride - pad + tap
// falls inside [0, extent).
inline std::pair<std::size_t, std::size_t> valid_range(std::size_t out_extent, std::size_t in_extent,
                                                       std::size_t stride, std::size_t pad, std::size_t tap) {
    // need o*stride + tap >= pad and o*stride + tap - pad < in_extent
    std::size_t lo = 0;
    if (tap < pad) lo = (pad - tap + stride - 1) / stride;
    const std::ptrdiff_t limit = static_cast<std::ptrdiff_t>(in_extent + pad) - static_cast<std::ptrdiff_t>(tap);
    std::size_t hi = 0;
    if (limit > 0) hi = std::min(out_extent, static_cast<std::size_t>((limit - 1) / static_cast<std::ptrdiff_t>(stride)) + 1);
    if (hi < lo) hi = lo;
    return {lo, hi};
}

}  // namespace detail

inline std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding) {
    return (in + 2 * padding - kernel) / stride + 1;
}

namespace detail {

/// C[M,N] += A[M,K] * B[K,N] (row-major, leading dimensions lda/ldb/ldc).
/// Four rows of C are updated per pass over B so each loaded B row is used
/// four times; the innermost loop runs along N and vectorizes. Summation
/// order is fixed, so results are reproducible.
inline void gemm_acc(std::size_t M, std::size_t N, std::size_t K, const double* A, std::size_t lda, const double* B,
                     std::size_t ldb, double* C, std::size_t ldc) {
    constexpr std::size_t kBlockN = 256;
    for (std::size_t j0 = 0; j0 < N; j0 += kBlockN) {
        const std::size_t nb = std::min(kBlockN, N - j0);
        std::size_t i = 0;
        for (; i + 4 <= M; i += 4) {
            double* c0 = C + i * ldc + j0;
            double* c1 = c0 + ldc;
            double* c2 = c1 + ldc;
            double* c3 = c2 + ldc;
            for (std::size_t k = 0; k < K; ++k) {
                const double a0 = A[i * lda + k], a1 = A[(i + 1) * lda + k];
                const double a2 = A[(i + 2) * lda + k], a3 = A[(i + 3) * lda + k];
                const double* b = B + k * ldb + j0;
                for (std::size_t j = 0; j < nb; ++j) {
                    const double bv = b[j];
                    c0[j] += a0 * bv;
                    c1[j] += a1 * bv;
                    c2[j] += a2 * bv;
                    c3[j] += a3 * bv;
                }
            }
        }
        for (; i < M; ++i) {
            double* c0 = C + i * ldc + j0;
            for (std::size_t k = 0; k < K; ++k) {
                const double a0 = A[i * lda + k];
                const double* b = B + k * ldb + j0;
                for (std::size_t j = 0; j < nb; ++j) c0[j] += a0 * b[j];
            }
        }
    }
}

/// C[M,N] += A[M,K] * B[N,K]^T. Each dot product is accumulated in four
/// interleaved partial sums (lane r takes k = r mod 4) that are combined in a
/// fixed order, which lets the loop vectorize while staying reproducible.
inline void gemm_nt_acc(std::size_t M, std::size_t N, std::size_t K, const double* A, std::size_t lda,
                        const double* B, std::size_t ldb, double* C, std::size_t ldc) {
    const std::size_t K4 = K - K % 4;
    for (std::size_t i = 0; i < M; ++i) {
        const double* a = A + i * lda;
        for (std::size_t j = 0; j < N; ++j) {
            const double* b = B + j * ldb;
            double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
            for (std::size_t k = 0; k < K4; k += 4) {
                s0 += a[k] * b[k];
                s1 += a[k + 1] * b[k + 1];
                s2 += a[k + 2] * b[k + 2];
                s3 += a[k + 3] * b[k + 3];
            }
            for (std::size_t k = K4; k < K; ++k) s0 += a[k] * b[k];
            C[i * ldc + j] += (s0 + s1) + (s2 + s3);
        }
    }
}

/// Unfolds one [C,H,W] image into columns [C*kh*kw, OH*OW] (zero padding).
inline void im2col(const double* x, std::size_t C, std::size_t H, std::size_t W, std::size_t kh, std::size_t kw,
                   std::size_t stride, std::size_t pad, std::size_t OH, std::size_t OW, double* col) {
    const std::size_t P = OH * OW;
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t i = 0; i < kh; ++i) {
            const auto [oh_lo, oh_hi] = valid_range(OH, H, stride, pad, i);
            for (std::size_t j = 0; j < kw; ++j) {
                const auto [ow_lo, ow_hi] = valid_range(OW, W, stride, pad, j);
                double* row = col + ((c * kh + i) * kw + j) * P;
                std::fill(row, row + P, 0.0);
                for (std::size_t oh = oh_lo; oh < oh_hi; ++oh) {
                    const double* xrow = x + (c * H + oh * stride + i - pad) * W + j - pad;
                    double* r = row + oh * OW;
                    if (stride == 1) {
                        for (std::size_t ow = ow_lo; ow < ow_hi; ++ow) r[ow] = xrow[ow];
                    } else {
                        for (std::size_t ow = ow_lo; ow < ow_hi; ++ow) r[ow] = xrow[ow * stride];
                    }
                }
            }
        }
    }
}

/// Adjoint of im2col: scatter-adds columns back into a [C,H,W] gradient.
inline void col2im_acc(const double* col, std::size_t C, std::size_t H, std::size_t W, std::size_t kh, std::size_t kw,
                       std::size_t stride, std::size_t pad, std::size_t OH, std::size_t OW, double* gx) {
    const std::size_t P = OH * OW;
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t i = 0; i < kh; ++i) {
            const auto [oh_lo, oh_hi] = valid_range(OH, H, stride, pad, i);
            for (std::size_t j = 0; j < kw; ++j) {
                const auto [ow_lo, ow_hi] = valid_range(OW, W, stride, pad, j);
                const double* row = col + ((c * kh + i) * kw + j) * P;
                for (std::size_t oh = oh_lo; oh < oh_hi; ++oh) {
                    double* grow = gx + (c * H + oh * stride + i - pad) * W + j - pad;
                    const double* r = row + oh * OW;
                    if (stride == 1) {
                        for (std::size_t ow = ow_lo; ow < ow_hi; ++ow) grow[ow] += r[ow];
                    } else {
                        for (std::size_t ow = ow_lo; ow < ow_hi; ++ow) grow[ow * stride] += r[ow];
                    }
                }
            }
        }
    }
}

}  // namespace detail

/// input [N,C,H,W], weight [K,C,kh,kw], bias [K] (or undefined for none).
/// Computed per sample as W[K, C*kh*kw] x im2col(x)[C*kh*kw, OH*OW].
inline Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
                     std::size_t padding) {
    if (input.rank() != 4 || weight.rank() != 4) throw DimensionError("conv2d expects rank-4 input and weight");
    if (stride < 1) throw DimensionError("conv2d stride must be >= 1");
    const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    const std::size_t K = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
    if (weight.dim(1) != C) {
        throw DimensionError("conv2d channel mismatch: input " + shape_str(input.shape()) + ", weight " +
                             shape_str(weight.shape()));
    }
    if (kh > H + 2 * padding || kw > W + 2 * padding) throw DimensionError("conv2d kernel larger than padded input");
    const bool has_bias = bias.defined();
    if (has_bias && (bias.rank() != 1 || bias.dim(0) != K)) throw DimensionError("conv2d bias must be [K]");
    const std::size_t OH = conv_out_extent(H, kh, stride, padding);
    const std::size_t OW = conv_out_extent(W, kw, stride, padding);
    const std::size_t P = OH * OW, Q = C * kh * kw;

    std::vector<double> out(N * K * P, 0.0);
    std::vector<double> col(Q * P);
    const double* x = input.data().data();
    const double* w = weight.data().data();
    for (std::size_t n = 0; n < N; ++n) {
        double* o = out.data() + n * K * P;
        if (has_bias) {
            for (std::size_t k = 0; k < K; ++k) std::fill(o + k * P, o + (k + 1) * P, bias.data()[k]);
        }
        detail::im2col(x + n * C * H * W, C, H, W, kh, kw, stride, padding, OH, OW, col.data());
        detail::gemm_acc(K, P, Q, w, Q, col.data(), P, o, P);
    }

    std::vector<Tensor> inputs{input, weight};
    if (has_bias) inputs.push_back(bias);
    return detail::make_op(
        "conv2d", {N, K, OH, OW}, std::move(out), std::move(inputs),
        [=](detail::Node& nd) {
            auto& in = *nd.inputs[0];
            auto& wt = *nd.inputs[1];
            const double* g = nd.grad.data();
            std::vector<double> col(Q * P), wT, gcol;
            if (in.requires_grad) {
                // W^T [Q,K] so grad_col = W^T x grad_out is a plain gemm.
                wT.resize(Q * K);
                for (std::size_t k = 0; k < K; ++k) {
                    for (std::size_t q = 0; q < Q; ++q) wT[q * K + k] = wt.data[k * Q + q];
                }
                gcol.resize(Q * P);
            }
            for (std::size_t n = 0; n < N; ++n) {
                const double* go = g + n * K * P;
                if (wt.requires_grad) {
                    // grad_W[K,Q] += grad_out[K,P] x col[Q,P]^T
                    detail::im2col(in.data.data() + n * C * H * W, C, H, W, kh, kw, stride, padding, OH, OW,
                                   col.data());
                    detail::gemm_nt_acc(K, Q, P, go, P, col.data(), P, wt.grad.data(), Q);
                }
                if (in.requires_grad) {
                    std::fill(gcol.begin(), gcol.end(), 0.0);
                    detail::gemm_acc(Q, P, K, wT.data(), K, go, P, gcol.data(), P);
                    detail::col2im_acc(gcol.data(), C, H, W, kh, kw, stride, padding, OH, OW,
                                       in.grad.data() + n * C * H * W);
                }
                if (nd.inputs.size() > 2 && nd.inputs[2]->requires_grad) {
                    for (std::size_t k = 0; k < K; ++k) {
                        double acc = 0.0;
                        for (std::size_t t = 0; t < P; ++t) acc += go[k * P + t];
                        nd.inputs[2]->grad[k] += acc;
                    }
                }
            }
        });
}

}  // namespace frqreg
