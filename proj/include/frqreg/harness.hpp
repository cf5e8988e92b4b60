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

// Training loop, clean and corrupted evaluation, and report emission.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "frqreg/checkpoint.hpp"
#include "frqreg/config.hpp"
#include "frqreg/corruptions.hpp"
#include "frqreg/data.hpp"
#include "frqreg/error.hpp"
#include "frqreg/layers.hpp"
#include "frqreg/losses.hpp"
#include "frqreg/model.hpp"
#include "frqreg/rng.hpp"
#include "frqreg/tensor.hpp"

namespace frqreg {

// ---------------------------------------------------------------------------
// Optimizer

/// SGD with momentum and L2 weight decay folded into the gradient:
///   v <- momentum * v + (g + weight_decay * w);   w <- w - lr * v
struct SgdOptimizer {
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::map<std::string, std::vector<double>> velocity;

    void step(const std::vector<std::pair<std::string, Tensor>>& params, double lr) {
        for (auto [name, p] : params) {
            auto w = p.mutable_data();
            auto& v = velocity[name];
            if (v.empty()) v.assign(w.size(), 0.0);
            const bool has = p.has_grad();
            const auto g = p.grad();
            for (std::size_t i = 0; i < w.size(); ++i) {
                const double gi = (has ? g[i] : 0.0) + weight_decay * w[i];
                v[i] = momentum * v[i] + gi;
                w[i] -= lr * v[i];
            }
        }
    }
};

// ---------------------------------------------------------------------------
// Reports

struct LossTerms {
    double ce = 0.0;
    double aux = 0.0;
    double supcon = 0.0;
    double total = 0.0;
};

struct StepLog {
    std::size_t epoch = 0;
    std::size_t step = 0;  // global step index
    double lr = 0.0;
    LossTerms loss;
};

struct EpochLog {
    std::size_t epoch = 0;
    double lr = 0.0;
    LossTerms mean_loss;  // mean over the epoch's steps
    std::size_t steps = 0;
    double seconds = 0.0;
};

struct CorruptionCell {
    CorruptionKind kind = CorruptionKind::identity;
    int severity = 0;
    double accuracy = 0.0;

    bool operator==(const CorruptionCell&) const = default;
};

struct RunReport {
    std::vector<EpochLog> epochs;
    std::optional<double> clean_accuracy;
    std::vector<CorruptionCell> cells;

    /// Kinds in order of first appearance.
    std::vector<CorruptionKind> kinds() const {
        std::vector<CorruptionKind> out;
        for (const auto& c : cells) {
            if (std::find(out.begin(), out.end(), c.kind) == out.end()) out.push_back(c.kind);
        }
        return out;
    }

    /// Mean accuracy over the severities evaluated for one kind.
    double kind_mean(CorruptionKind kind) const {
        double s = 0.0;
        std::size_t n = 0;
        for (const auto& c : cells) {
            if (c.kind == kind) {
                s += c.accuracy;
                ++n;
            }
        }
        if (n == 0) throw ContractError("no cells for kind " + std::string(to_string(kind)));
        return s / static_cast<double>(n);
    }

    /// Mean over kinds of the per-kind mean over severities.
    double mean_corruption_accuracy() const { return mean_over_kinds([](CorruptionKind) { return true; }); }

    /// Same aggregation restricted to kinds matching `pred`; NaN when none.
    template <typename Pred>
    double mean_over_kinds(Pred pred) const {
        double s = 0.0;
        std::size_t n = 0;
        for (CorruptionKind k : kinds()) {
            if (!pred(k)) continue;
            s += kind_mean(k);
            ++n;
        }
        return n == 0 ? std::nan("") : s / static_cast<double>(n);
    }
};

// ---------------------------------------------------------------------------
// Data plumbing

/// Loads one split restricted to `classes`, sub-sampled per class when
/// `per_class` > 0, with labels remapped to 0..k-1 in the listed order.
inline Dataset load_split(const std::filesystem::path& dir, Split split, const std::vector<int>& classes,
                          std::size_t per_class, std::uint64_t subset_seed) {
    Dataset all = load_cifar10(dir, split);
    Dataset out;
    if (per_class > 0) {
        out = subset(all, classes, per_class, subset_seed);
    } else {
        out.sources = all.sources;
        for (int cls : classes) {
            for (std::size_t i = 0; i < all.size(); ++i) {
                if (all.labels[i] != cls) continue;
                out.images.push_back(all.images[i]);
                out.labels.push_back(cls);
                out.origin.push_back(all.origin.empty() ? i : all.origin[i]);
            }
        }
    }
    remap_labels(out, classes);
    return out;
}

// ---------------------------------------------------------------------------
// Training

struct TrainResult {
    Network network;
    Checkpoint checkpoint;
    RunReport report;
    std::vector<StepLog> steps;
};

/// Called after every optimizer update with the step record and the network.
using StepHook = std::function<void(const StepLog&, Network&)>;

namespace harness_detail {

inline std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    const CounterRng rng = CounterRng(seed, fnv1a("shuffle")).fork(epoch);
    for (std::size_t j = 0; j + 1 < n; ++j) std::swap(order[j], order[j + rng.below(j, n - j)]);
    return order;
}

inline std::string grad_norm_summary(Network& net) {
    std::ostringstream os;
    for (auto& [name, p] : net.parameters()) {
        double s = 0.0;
        if (p.has_grad()) {
            for (double g : p.grad()) s += g * g;
        }
        os << "\n  |grad " << name << "| = " << std::sqrt(s);
    }
    return os.str();
}

inline void store_split_u64(Checkpoint& ckpt, const std::string& name, std::uint64_t v) {
    ckpt.put(name, {static_cast<double>(v & 0xffffffffULL), static_cast<double>(v >> 32)});
}

}  // namespace harness_detail

inline Checkpoint make_checkpoint(Network& net, const TrainConfig& cfg, const SgdOptimizer& opt, std::size_t epoch,
                                  std::size_t step) {
    Checkpoint ckpt;
    store_network(ckpt, net);
    store_normalization(ckpt, cfg.normalization);
    ckpt.put("config.loss_weights", {cfg.weights.lambda, cfg.weights.alpha, cfg.weights.tau});
    ckpt.put("config.classes", std::vector<double>(cfg.classes.begin(), cfg.classes.end()));
    ckpt.put("optim.hyper", {cfg.lr_at(epoch), opt.momentum, opt.weight_decay});
    for (auto& [name, p] : net.parameters()) {
        auto it = opt.velocity.find(name);
        ckpt.put("optim.velocity." + name, p.shape(),
                 it == opt.velocity.end() ? std::vector<double>(p.numel(), 0.0) : it->second);
    }
    // The generators are counter based; (seed, epoch, step) is their full state.
    harness_detail::store_split_u64(ckpt, "state.seed", cfg.seed);
    ckpt.put("state.epoch", {static_cast<double>(epoch)});
    ckpt.put("state.step", {static_cast<double>(step)});
    return ckpt;
}

/// Runs SGD over `train_set` (labels already 0..k-1, pixels in [0,1]).
/// Pipeline per sample: normalize, then augment (crop/flip). The last partial
/// batch of an epoch is used when it has at least 2 samples.
inline TrainResult train(const TrainConfig& cfg, const Dataset& train_set, std::ostream* log = nullptr,
                         const StepHook& hook = {}) {
    cfg.validate();
    if (train_set.size() < 2) throw DataError("training set needs at least 2 samples");
    const ModelConfig mcfg = cfg.model_config();
    for (int y : train_set.labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= mcfg.num_classes) {
            throw ConfigError("training label " + std::to_string(y) + " outside the configured " +
                              std::to_string(mcfg.num_classes) + " classes");
        }
    }

    TrainResult result{build_model(mcfg, cfg.seed), {}, {}, {}};
    Network& net = result.network;
    SgdOptimizer opt{cfg.momentum, cfg.weight_decay, {}};
    const AugmentPolicy policy = cfg.augment_policy();
    const bool freq = uses_frequency_filter(cfg.method);
    const bool con = uses_supcon(cfg.method);

    std::vector<Image> normalized;
    normalized.reserve(train_set.size());
    for (const Image& img : train_set.images) normalized.push_back(normalize(img, cfg.normalization));

    std::size_t global_step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lr = cfg.lr_at(epoch);
        const auto order = harness_detail::epoch_order(cfg.seed, epoch, train_set.size());
        EpochLog elog;
        elog.epoch = epoch;
        elog.lr = lr;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            if (end - start < 2) break;
            std::vector<Image> batch;
            std::vector<int> labels;
            for (std::size_t j = start; j < end; ++j) {
                const std::size_t idx = order[j];
                batch.push_back(augment(normalized[idx], policy, epoch, idx));
                labels.push_back(train_set.labels[idx]);
            }
            const Tensor x = stack_images(batch);

            net.clear_caches();
            Tensor logits, projection;
            if (con) {
                DualHeadOutput out = forward_dual_head(net, x, Mode::train);
                logits = out.logits;
                projection = out.projection;
            } else {
                logits = forward_logits(net, x, Mode::train);
            }
            const auto pairs = drain_aux_pairs(net);
            const Tensor ce = cross_entropy(logits, labels);
            Tensor total = ce;
            LossTerms terms;
            if (freq) {
                const Tensor aux = aux_mse_total(pairs);
                total = total_loss_freq(total, aux, cfg.weights);
                terms.aux = aux.item();
            }
            if (con) {
                const Tensor sc = supcon_loss(LabeledBatch{projection, labels}, cfg.weights.tau);
                total = total_loss_supcon(total, sc, cfg.weights);
                terms.supcon = sc.item();
            }
            terms.ce = ce.item();
            terms.total = total.item();
            if (!std::isfinite(terms.total)) {
                throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + " step " +
                                   std::to_string(global_step) + " (lr " + std::to_string(lr) + ", ce " +
                                   std::to_string(terms.ce) + ", aux " + std::to_string(terms.aux) + ", supcon " +
                                   std::to_string(terms.supcon) + ")" + harness_detail::grad_norm_summary(net));
            }

            net.zero_grad();
            backward(total);
            for (auto& [name, p] : net.parameters()) {
                if (!p.has_grad()) continue;
                for (double g : p.grad()) {
                    if (!std::isfinite(g)) {
                        throw NumericError("non-finite gradient in " + name + " at step " + std::to_string(global_step) +
                                           " (lr " + std::to_string(lr) + ")" + harness_detail::grad_norm_summary(net));
                    }
                }
            }
            opt.step(net.parameters(), lr);

            const StepLog slog{epoch, global_step, lr, terms};
            result.steps.push_back(slog);
            elog.mean_loss.ce += terms.ce;
            elog.mean_loss.aux += terms.aux;
            elog.mean_loss.supcon += terms.supcon;
            elog.mean_loss.total += terms.total;
            ++elog.steps;
            ++global_step;
            if (hook) hook(slog, net);
        }
        if (elog.steps > 0) {
            const double n = static_cast<double>(elog.steps);
            elog.mean_loss.ce /= n;
            elog.mean_loss.aux /= n;
            elog.mean_loss.supcon /= n;
            elog.mean_loss.total /= n;
        }
        elog.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (log) {
            *log << "epoch " << epoch + 1 << "/" << cfg.epochs << " lr " << lr << " ce " << elog.mean_loss.ce
                 << " aux " << elog.mean_loss.aux << " supcon " << elog.mean_loss.supcon << " total "
                 << elog.mean_loss.total << " (" << elog.seconds << " s)\n";
        }
        result.report.epochs.push_back(elog);
    }
    net.zero_grad();
    net.clear_caches();
    result.checkpoint = make_checkpoint(net, cfg, opt, cfg.epochs, global_step);
    return result;
}

inline std::string steps_csv(const std::vector<StepLog>& steps) {
    std::string out = "epoch,step,lr,ce,aux,supcon,total\n";
    char buf[256];
    for (const auto& s : steps) {
        std::snprintf(buf, sizeof(buf), "%zu,%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", s.epoch, s.step, s.lr, s.loss.ce,
                      s.loss.aux, s.loss.supcon, s.loss.total);
        out += buf;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation

/// Top-1 predictions in eval mode for images in [0,1].
inline std::vector<int> predict(Network& net, const std::vector<Image>& images, const Normalization& norm,
                                std::size_t batch_size = 256) {
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    NoGradGuard no_grad;
    std::vector<int> out;
    out.reserve(images.size());
    for (std::size_t start = 0; start < images.size(); start += batch_size) {
        const std::size_t end = std::min(images.size(), start + batch_size);
        std::vector<Image> batch;
        for (std::size_t i = start; i < end; ++i) batch.push_back(normalize(images[i], norm));
        const Tensor logits = forward_logits(net, stack_images(batch), Mode::eval);
        const std::size_t K = logits.dim(1);
        const auto z = logits.data();
        for (std::size_t r = 0; r < end - start; ++r) {
            std::size_t best = 0;
            for (std::size_t k = 1; k < K; ++k) {
                if (z[r * K + k] > z[r * K + best]) best = k;
            }
            out.push_back(static_cast<int>(best));
        }
    }
    return out;
}

inline void check_labels_fit(const Network& net, const Dataset& ds) {
    for (int y : ds.labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= net.config.num_classes) {
            throw ConfigError("dataset label " + std::to_string(y) + " does not fit a " +
                              std::to_string(net.config.num_classes) + "-class model");
        }
    }
}

inline double accuracy_of(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.size() != labels.size() || labels.empty()) throw ContractError("accuracy needs matching, non-empty sets");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hit += predictions[i] == labels[i] ? 1 : 0;
    return static_cast<double>(hit) / static_cast<double>(labels.size());
}

inline double evaluate_clean(Network& net, const Dataset& ds, const Normalization& norm, std::size_t batch_size = 256) {
    check_labels_fit(net, ds);
    return accuracy_of(predict(net, ds.images, norm, batch_size), ds.labels);
}

/// Seed of the corruption applied to dataset element `index`.
inline std::uint64_t corruption_seed(std::uint64_t seed, std::size_t index) {
    const auto b = CounterRng(seed, fnv1a("eval-corruption")).block(index);
    return static_cast<std::uint64_t>(b[0]) | (static_cast<std::uint64_t>(b[1]) << 32);
}

/// Accuracy per (kind, severity), in the given kind and severity order.
/// Cells are evaluated sequentially; every cell owns its corruption stream,
/// so the values do not depend on evaluation order.
inline std::vector<CorruptionCell> evaluate_corrupted(Network& net, const Dataset& ds,
                                                      const std::vector<CorruptionKind>& kinds,
                                                      const std::vector<int>& severities, std::uint64_t seed,
                                                      const Normalization& norm, std::size_t batch_size = 256,
                                                      std::ostream* log = nullptr) {
    check_labels_fit(net, ds);
    if (kinds.empty() || severities.empty()) throw ConfigError("need at least one kind and one severity");
    for (int s : severities) {
        if (s < 1 || s > 5) throw ConfigError("severity " + std::to_string(s) + " outside 1..5");
    }
    std::vector<CorruptionCell> cells;
    for (CorruptionKind kind : kinds) {
        for (int sev : severities) {
            std::vector<Image> corrupted;
            corrupted.reserve(ds.size());
            for (std::size_t i = 0; i < ds.size(); ++i) {
                corrupted.push_back(corrupt(ds.images[i], CorruptionSpec{kind, sev, corruption_seed(seed, i)}));
            }
            const double acc = accuracy_of(predict(net, corrupted, norm, batch_size), ds.labels);
            cells.push_back({kind, sev, acc});
            if (log) *log << to_string(kind) << " severity " << sev << ": " << acc << '\n';
        }
    }
    return cells;
}

// ---------------------------------------------------------------------------
// Report files

inline std::string results_csv(const RunReport& report) {
    if (!report.clean_accuracy) throw ContractError("report has no clean accuracy");
    std::string out = "corruption,severity,accuracy\n";
    char buf[128];
    std::snprintf(buf, sizeof(buf), "clean,0,%.17g\n", *report.clean_accuracy);
    out += buf;
    for (const auto& c : report.cells) {
        std::snprintf(buf, sizeof(buf), "%s,%d,%.17g\n", std::string(to_string(c.kind)).c_str(), c.severity, c.accuracy);
        out += buf;
    }
    return out;
}

/// Inverse of results_csv.
inline RunReport parse_results_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "corruption,severity,accuracy") throw FormatError("results.csv: bad header");
    RunReport report;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto c1 = line.find(','), c2 = line.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos) {
            throw FormatError("results.csv line " + std::to_string(line_no) + ": expected 3 fields");
        }
        const std::string name = line.substr(0, c1);
        int sev = 0;
        double acc = 0.0;
        try {
            sev = std::stoi(line.substr(c1 + 1, c2 - c1 - 1));
            acc = std::stod(line.substr(c2 + 1));
        } catch (const std::logic_error&) {
            throw FormatError("results.csv line " + std::to_string(line_no) + ": bad number");
        }
        if (name == "clean") {
            report.clean_accuracy = acc;
        } else {
            report.cells.push_back({parse_corruption(name), sev, acc});
        }
    }
    return report;
}

inline std::string display_name(CorruptionKind k) {
    std::string s(to_string(k));
    bool up = true;
    for (char& c : s) {
        if (c == '_') {
            c = ' ';
            up = true;
        } else if (up) {
            c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
            up = false;
        }
    }
    return s;
}

/// Markdown table: clean, mean corruption accuracy, then kinds grouped as
/// noise / blur / other with family averages after the noise and blur groups.
inline std::string summary_markdown(const RunReport& report) {
    if (!report.clean_accuracy) throw ContractError("report has no clean accuracy");
    std::ostringstream os;
    char buf[160];
    auto row = [&](const std::string& label, double frac) {
        std::snprintf(buf, sizeof(buf), "| %s | %.2f | %.17g |\n", label.c_str(), 100.0 * frac, frac);
        os << buf;
    };
    os << "# Accuracy on clean and corrupted test data\n\n";
    os << "| Corruption Type | Accuracy (%) | Fraction |\n|---|---:|---:|\n";
    row("Clean", *report.clean_accuracy);
    const bool any = !report.cells.empty();
    if (any) row("Mean Corruption Acc", report.mean_corruption_accuracy());

    const auto present = report.kinds();
    auto has = [&](CorruptionKind k) { return std::find(present.begin(), present.end(), k) != present.end(); };
    std::vector<CorruptionKind> ordered;
    for (CorruptionKind k : kBenchmarkKinds) {
        if (has(k)) ordered.push_back(k);
    }
    for (CorruptionKind k : present) {
        if (std::find(ordered.begin(), ordered.end(), k) == ordered.end()) ordered.push_back(k);
    }
    for (std::size_t i = 0; i < ordered.size(); ++i) {
        const CorruptionKind k = ordered[i];
        row(display_name(k), report.kind_mean(k));
        const bool last_noise = is_noise(k) && (i + 1 == ordered.size() || !is_noise(ordered[i + 1]));
        const bool last_blur = is_blur(k) && (i + 1 == ordered.size() || !is_blur(ordered[i + 1]));
        if (last_noise) row("Avg. Noise Acc.", report.mean_over_kinds(is_noise));
        if (last_blur) row("Avg. Blur Acc.", report.mean_over_kinds(is_blur));
    }
    if (!report.epochs.empty()) {
        os << "\n## Training loss per epoch\n\n| Epoch | LR | CE | Aux | SupCon | Total | Seconds |\n"
              "|---:|---:|---:|---:|---:|---:|---:|\n";
        for (const auto& e : report.epochs) {
            std::snprintf(buf, sizeof(buf), "| %zu | %.6g | %.6f | %.6f | %.6f | %.6f | %.1f |\n", e.epoch + 1, e.lr,
                          e.mean_loss.ce, e.mean_loss.aux, e.mean_loss.supcon, e.mean_loss.total, e.seconds);
            os << buf;
        }
    }
    return os.str();
}

inline void ensure_directory(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

inline void emit_report(const RunReport& report, const std::filesystem::path& dir) {
    ensure_directory(dir);
    detail::write_file(dir / "results.csv", results_csv(report));
    detail::write_file(dir / "summary.md", summary_markdown(report));
}

}  // namespace frqreg
