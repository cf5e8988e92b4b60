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

#include <gtest/gtest.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "frqreg/checkpoint.hpp"
#include "frqreg/config.hpp"
#include "frqreg/harness.hpp"
#include "frqreg/visualize.hpp"

using namespace frqreg;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = fs::temp_directory_path() / ("frqreg_test_harness_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

/// Small but complete configuration: 32x32 inputs, two stages of width 4/8.
TrainConfig tiny_config(Method method) {
    TrainConfig cfg;
    cfg.method = method;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    cfg.lr = 0.05;
    cfg.classes = {0, 1};
    cfg.widths = {4, 8};
    cfg.blocks_per_stage = 1;
    cfg.projection_dim = 8;
    cfg.replaced_layers = 2;
    cfg.seed = 5;
    return cfg;
}

Dataset synthetic_set(std::size_t per_class, int classes, std::uint64_t seed) {
    Dataset ds;
    for (std::size_t i = 0; i < per_class * static_cast<std::size_t>(classes); ++i) {
        const int cls = static_cast<int>(i % static_cast<std::size_t>(classes));
        ds.images.push_back(synthetic_image(cls, seed, i));
        ds.labels.push_back(cls);
    }
    return ds;
}

std::vector<std::vector<double>> snapshot(Network& net) {
    std::vector<std::vector<double>> out;
    for (auto& [name, t] : net.parameters()) out.emplace_back(t.data().begin(), t.data().end());
    for (auto& [name, buf] : net.buffers()) out.push_back(*buf);
    return out;
}

std::vector<double> logits_of(Network& net, const Dataset& ds, const Normalization& norm) {
    NoGradGuard guard;
    std::vector<Image> batch;
    for (const Image& img : ds.images) batch.push_back(normalize(img, norm));
    const Tensor logits = forward_logits(net, stack_images(batch), Mode::eval);
    return {logits.data().begin(), logits.data().end()};
}

RunReport sample_report() {
    RunReport r;
    r.clean_accuracy = 0.8125;
    const std::vector<CorruptionKind> kinds{CorruptionKind::gaussian_noise, CorruptionKind::gaussian_blur,
                                            CorruptionKind::contrast};
    double a = 0.7;
    for (CorruptionKind k : kinds) {
        for (int s = 1; s <= 5; ++s) {
            r.cells.push_back({k, s, a});
            a -= 0.0371;
        }
    }
    return r;
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(FRQREG_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

// ---------------------------------------------------------------------------
// Optimizer and schedule

TEST(Sgd, StepMatchesHandArithmetic) {
    Tensor w = Tensor::from_data({2}, {1.0, -2.0}, true);
    Tensor loss = sum(mul(w, w));  // grad = 2w
    backward(loss);
    SgdOptimizer opt{0.9, 0.1, {}};
    opt.step({{"w", w}}, 0.5);
    // v = 2w + 0.1w = 2.1w; w' = w - 0.5 * 2.1w = -0.05w
    EXPECT_NEAR(w.data()[0], -0.05, 1e-15);
    EXPECT_NEAR(w.data()[1], 0.1, 1e-15);
    EXPECT_NEAR(opt.velocity["w"][0], 2.1, 1e-15);
    // Second step with the same gradient buffer: v = 0.9 * 2.1 + (2 + 0.1 * -0.05)
    opt.step({{"w", w}}, 0.5);
    const double v = 0.9 * 2.1 + (2.0 + 0.1 * -0.05);
    EXPECT_NEAR(opt.velocity["w"][0], v, 1e-14);
    EXPECT_NEAR(w.data()[0], -0.05 - 0.5 * v, 1e-14);
}

TEST(Sgd, ParameterWithoutGradientOnlyDecays) {
    Tensor w = Tensor::from_data({1}, {2.0}, true);
    SgdOptimizer opt{0.0, 0.5, {}};
    opt.step({{"w", w}}, 0.1);
    EXPECT_NEAR(w.data()[0], 2.0 - 0.1 * 1.0, 1e-15);
}

TEST(Schedule, DecaysAtHalfAndThreeQuarters) {
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.lr = 0.05;
    EXPECT_EQ(cfg.decay_epochs(), (std::vector<std::size_t>{15, 22}));
    EXPECT_DOUBLE_EQ(cfg.lr_at(0), 0.05);
    EXPECT_DOUBLE_EQ(cfg.lr_at(14), 0.05);
    EXPECT_NEAR(cfg.lr_at(15), 0.005, 1e-18);
    EXPECT_NEAR(cfg.lr_at(22), 0.0005, 1e-18);
    cfg.lr_decay_epochs = {3};
    EXPECT_NEAR(cfg.lr_at(3), 0.005, 1e-18);
    cfg.epochs = 1;
    cfg.lr_decay_epochs.clear();
    EXPECT_TRUE(cfg.decay_epochs().empty());
}

TEST(Schedule, EpochOrderIsAPermutationAndSeeded) {
    const auto a = harness_detail::epoch_order(1, 0, 50);
    auto sorted = a;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
    EXPECT_EQ(a, harness_detail::epoch_order(1, 0, 50));
    EXPECT_NE(a, harness_detail::epoch_order(1, 1, 50));
    EXPECT_NE(a, harness_detail::epoch_order(2, 0, 50));
}

// ---------------------------------------------------------------------------
// Config

TEST(Config, ParseAndTextRoundTrip) {
    const TrainConfig cfg = parse_train_config(
        "# comment\nmethod = both\nepochs = 7\nlr = 0.125\nlambda = 0.3\nalpha = 0.2\ntau = 0.5\n"
        "classes = 1, 3, 5\nwidths = 4,8\nseed = 12345678901\nnorm_mean = 0.5,0.5,0.5\n");
    EXPECT_EQ(cfg.method, Method::both);
    EXPECT_EQ(cfg.epochs, 7u);
    EXPECT_EQ(cfg.lr, 0.125);
    EXPECT_EQ(cfg.weights.lambda, 0.3);
    EXPECT_EQ(cfg.classes, (std::vector<int>{1, 3, 5}));
    EXPECT_EQ(cfg.seed, 12345678901ULL);
    const TrainConfig again = parse_train_config(to_text(cfg));
    EXPECT_EQ(to_text(again), to_text(cfg));
    EXPECT_EQ(again.weights.tau, 0.5);
    EXPECT_EQ(again.widths, cfg.widths);
}

TEST(Config, InvalidInputsAreConfigErrors) {
    EXPECT_THROW(parse_train_config("learning_rate = 0.1\n"), ConfigError);
    EXPECT_THROW(parse_train_config("lr = fast\n"), ConfigError);
    EXPECT_THROW(parse_train_config("method = mixup\n"), ConfigError);
    EXPECT_THROW(parse_train_config("no equals sign\n"), ConfigError);
    EXPECT_THROW(parse_train_config("batch_size = 1\n"), ConfigError);
    EXPECT_THROW(parse_train_config("classes = 0\n"), ConfigError);
    EXPECT_THROW(parse_train_config("classes = 0,0\n"), ConfigError);
    EXPECT_THROW(parse_train_config("classes = 0,10\n"), ConfigError);
    EXPECT_THROW(parse_train_config("tau = 0\n"), ConfigError);
    EXPECT_THROW(parse_train_config("lambda = -1\n"), ConfigError);
    EXPECT_THROW(parse_train_config("momentum = 1\n"), ConfigError);
    EXPECT_THROW(parse_train_config("method = freq\nreplaced_layers = 0\n"), ConfigError);
    EXPECT_THROW(load_train_config("/nonexistent/frqreg.cfg"), IoError);
}

TEST(Config, EveryKeyIsAccepted) {
    TrainConfig base;
    const std::string text = to_text(base);
    for (const auto& key : config_keys()) {
        if (key == "data_dir" || key == "out_dir") continue;
        EXPECT_NE(text.find(key + " = "), std::string::npos) << key;
    }
}

// ---------------------------------------------------------------------------
// Training

TEST(Train, ZeroEpochsKeepsInitialization) {
    TrainConfig cfg = tiny_config(Method::freq);
    cfg.epochs = 0;
    const Dataset ds = synthetic_set(4, 2, 1);
    TrainResult r = train(cfg, ds);
    Network init = build_model(cfg.model_config(), cfg.seed);
    EXPECT_EQ(snapshot(r.network), snapshot(init));
    EXPECT_TRUE(r.steps.empty());
}

TEST(Train, StepCountAndPartialBatchPolicy) {
    TrainConfig cfg = tiny_config(Method::baseline);
    cfg.epochs = 1;
    cfg.batch_size = 8;
    // 17 samples: two full batches, the trailing single sample is skipped.
    Dataset ds = synthetic_set(9, 2, 2);
    ds.images.pop_back();
    ds.labels.pop_back();
    EXPECT_EQ(train(cfg, ds).steps.size(), 2u);
    // 18 samples: the trailing pair is a batch.
    EXPECT_EQ(train(cfg, synthetic_set(9, 2, 2)).steps.size(), 3u);
}

TEST(Train, IsDeterministic) {
    const TrainConfig cfg = tiny_config(Method::both);
    const Dataset ds = synthetic_set(8, 2, 3);
    TrainResult a = train(cfg, ds), b = train(cfg, ds);
    EXPECT_EQ(snapshot(a.network), snapshot(b.network));
    EXPECT_EQ(encode_checkpoint(a.checkpoint), encode_checkpoint(b.checkpoint));
}

TEST(Train, ZeroWeightRegularizersReproduceBaseline) {
    const Dataset ds = synthetic_set(8, 2, 4);
    TrainConfig base = tiny_config(Method::baseline);
    TrainResult b = train(base, ds);

    TrainConfig freq = tiny_config(Method::freq);
    freq.weights.lambda = 0.0;
    TrainResult f = train(freq, ds);

    TrainConfig con = tiny_config(Method::supcon);
    con.weights.alpha = 0.0;
    TrainResult s = train(con, ds);

    EXPECT_EQ(snapshot(f.network), snapshot(b.network));
    // All parameters match, projection head included: with alpha = 0 its loss
    // gradient is exactly zero and weight decay applies in both runs.
    EXPECT_EQ(snapshot(s.network), snapshot(b.network));
    ASSERT_EQ(f.steps.size(), b.steps.size());
    for (std::size_t i = 0; i < b.steps.size(); ++i) {
        EXPECT_EQ(f.steps[i].loss.total, b.steps[i].loss.total);
        EXPECT_EQ(s.steps[i].loss.total, b.steps[i].loss.total);
        EXPECT_GE(f.steps[i].loss.aux, 0.0);
    }
}

TEST(Train, LossDecomposesIntoWeightedTerms) {
    const Dataset ds = synthetic_set(8, 2, 5);
    TrainConfig cfg = tiny_config(Method::both);
    cfg.weights.lambda = 0.3;
    cfg.weights.alpha = 0.7;
    std::size_t calls = 0;
    TrainResult r = train(cfg, ds, nullptr, [&](const StepLog& s, Network&) {
        ++calls;
        EXPECT_NEAR(s.loss.total, s.loss.ce + 0.3 * s.loss.aux + 0.7 * s.loss.supcon, 1e-12);
        EXPECT_GT(s.loss.aux, 0.0);
        EXPECT_GT(s.loss.supcon, 0.0);
    });
    EXPECT_EQ(calls, r.steps.size());
    EXPECT_EQ(r.report.epochs.size(), cfg.epochs);
    double mean = 0.0;
    for (std::size_t i = 0; i < r.report.epochs[0].steps; ++i) mean += r.steps[i].loss.total;
    EXPECT_NEAR(mean / static_cast<double>(r.report.epochs[0].steps), r.report.epochs[0].mean_loss.total, 1e-12);
}

TEST(Train, LabelsOutsideConfiguredClassesAreRejected) {
    Dataset ds = synthetic_set(2, 2, 6);
    ds.labels[0] = 2;
    EXPECT_THROW(train(tiny_config(Method::baseline), ds), ConfigError);
    EXPECT_THROW(train(tiny_config(Method::baseline), synthetic_set(1, 1, 6)), DataError);
}

TEST(Train, DivergenceIsANumericError) {
    TrainConfig cfg = tiny_config(Method::baseline);
    cfg.lr = 1e200;
    cfg.epochs = 3;
    EXPECT_THROW(train(cfg, synthetic_set(8, 2, 7)), NumericError);
}

TEST(Train, LearnsASeparableTwoClassProblem) {
    // Dark versus bright images with per-pixel noise: linearly separable after
    // global pooling, so a working optimizer must drive the loss down.
    const auto make = [](std::size_t n, std::uint64_t seed) {
        Dataset ds;
        const CounterRng rng(seed, fnv1a("test-harness-bright"));
        for (std::size_t i = 0; i < n; ++i) {
            const int cls = static_cast<int>(i % 2);
            Image img(3, 32, 32);
            for (std::size_t k = 0; k < img.data.size(); ++k) {
                img.data[k] = (cls == 0 ? 0.3 : 0.7) + 0.4 * (rng.uniform(i * img.data.size() + k) - 0.5);
            }
            ds.images.push_back(std::move(img));
            ds.labels.push_back(cls);
        }
        return ds;
    };
    TrainConfig cfg = tiny_config(Method::freq);
    cfg.epochs = 6;
    cfg.batch_size = 16;
    TrainResult r = train(cfg, make(64, 8));
    const double first = r.report.epochs.front().mean_loss.ce;
    const double last = r.report.epochs.back().mean_loss.ce;
    EXPECT_LT(last, 0.5 * first) << first << " -> " << last;
    EXPECT_GE(evaluate_clean(r.network, make(32, 9), cfg.normalization), 0.9);
}

// ---------------------------------------------------------------------------
// Checkpoints

TEST(Checkpoint, ByteRoundTripAndBitExactRestore) {
    const TrainConfig cfg = tiny_config(Method::both);
    const Dataset ds = synthetic_set(4, 2, 10);
    TrainResult r = train(cfg, ds);
    const std::string bytes = encode_checkpoint(r.checkpoint);
    EXPECT_EQ(bytes.substr(0, 4), "FRQR");
    const Checkpoint back = decode_checkpoint(bytes);
    EXPECT_EQ(back, r.checkpoint);
    EXPECT_EQ(encode_checkpoint(back), bytes);

    Network restored = restore_network(back);
    EXPECT_EQ(restored.frequency_filter_count(), r.network.frequency_filter_count());
    EXPECT_EQ(logits_of(restored, ds, read_normalization(back)), logits_of(r.network, ds, cfg.normalization));
    EXPECT_EQ(back.get("state.epoch").values[0], static_cast<double>(cfg.epochs));
}

TEST(Checkpoint, FileRoundTripAndCorruptionDetection) {
    TempDir dir("ckpt");
    Network net = build_model(tiny_config(Method::freq).model_config(), 1);
    Checkpoint ckpt;
    store_network(ckpt, net);
    save_checkpoint(dir.path() / "a.frqr", ckpt);
    EXPECT_EQ(load_checkpoint(dir.path() / "a.frqr"), ckpt);
    EXPECT_THROW(load_checkpoint(dir.path() / "missing.frqr"), IoError);

    std::string bytes = encode_checkpoint(ckpt);
    std::string flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x10;
    EXPECT_THROW(decode_checkpoint(flipped), FormatError);
    std::string magic = bytes;
    magic[0] = 'X';
    EXPECT_THROW(decode_checkpoint(magic), FormatError);
    EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), FormatError);
    EXPECT_THROW(decode_checkpoint(""), FormatError);
}

// ---------------------------------------------------------------------------
// Evaluation

TEST(Evaluate, ConstantPredictorScoresClassFrequency) {
    Network net = build_model(tiny_config(Method::baseline).model_config(), 11);
    for (double& w : net.classifier.weight.mutable_data()) w = 0.0;
    net.classifier.bias.mutable_data()[0] = 1.0;
    net.classifier.bias.mutable_data()[1] = 0.0;
    Dataset ds = synthetic_set(6, 2, 12);
    for (std::size_t i = 0; i < 4; ++i) ds.labels[2 * i + 1] = 0;  // 10 of 12 labeled 0
    EXPECT_NEAR(evaluate_clean(net, ds, Normalization{}), 10.0 / 12.0, 1e-15);
    const auto cells = evaluate_corrupted(net, ds, {CorruptionKind::gaussian_noise}, {5}, 0, Normalization{});
    EXPECT_NEAR(cells[0].accuracy, 10.0 / 12.0, 1e-15);
}

TEST(Evaluate, BatchSizeDoesNotChangePredictions) {
    Network net = build_model(tiny_config(Method::freq).model_config(), 13);
    const Dataset ds = synthetic_set(10, 2, 14);
    const auto a = predict(net, ds.images, Normalization{}, 1);
    const auto b = predict(net, ds.images, Normalization{}, 7);
    const auto c = predict(net, ds.images, Normalization{}, 256);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a, c);
    // Oracle: per-sample argmax of the eval-mode logits.
    const auto logits = logits_of(net, ds, Normalization{});
    for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(a[i], logits[2 * i + 1] > logits[2 * i] ? 1 : 0) << i;
    EXPECT_THROW(predict(net, ds.images, Normalization{}, 0), ConfigError);
}

TEST(Evaluate, IdentityCorruptionEqualsCleanAccuracy) {
    Network net = build_model(tiny_config(Method::baseline).model_config(), 15);
    const Dataset ds = synthetic_set(10, 2, 16);
    const double clean = evaluate_clean(net, ds, Normalization{});
    const auto cells = evaluate_corrupted(net, ds, {CorruptionKind::identity}, {1, 3}, 9, Normalization{});
    for (const auto& c : cells) EXPECT_EQ(c.accuracy, clean);
}

TEST(Evaluate, CellsAreIndependentOfOrder) {
    Network net = build_model(tiny_config(Method::baseline).model_config(), 17);
    const Dataset ds = synthetic_set(6, 2, 18);
    const auto ab = evaluate_corrupted(net, ds, {CorruptionKind::shot_noise, CorruptionKind::contrast}, {2, 4}, 3,
                                       Normalization{});
    const auto ba = evaluate_corrupted(net, ds, {CorruptionKind::contrast, CorruptionKind::shot_noise}, {4, 2}, 3,
                                       Normalization{});
    for (const auto& cell : ab) EXPECT_NE(std::find(ba.begin(), ba.end(), cell), ba.end());
}

TEST(Evaluate, InvalidRequestsAreRejected) {
    Network net = build_model(tiny_config(Method::baseline).model_config(), 19);
    const Dataset ds = synthetic_set(2, 2, 20);
    EXPECT_THROW(evaluate_corrupted(net, ds, {CorruptionKind::contrast}, {0}, 0, Normalization{}), ConfigError);
    EXPECT_THROW(evaluate_corrupted(net, ds, {CorruptionKind::contrast}, {6}, 0, Normalization{}), ConfigError);
    EXPECT_THROW(evaluate_corrupted(net, ds, {}, {1}, 0, Normalization{}), ConfigError);
    Dataset bad = ds;
    bad.labels[0] = 5;
    EXPECT_THROW(evaluate_clean(net, bad, Normalization{}), ConfigError);
}

TEST(Evaluate, UntrainedModelIsNearChance) {
    // Averaged over several seeds to keep the check tight yet stable.
    const Dataset ds = synthetic_set(50, 2, 21);
    double s = 0.0;
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        Network net = build_model(tiny_config(Method::baseline).model_config(), 100 + seed);
        s += evaluate_clean(net, ds, Normalization{});
    }
    EXPECT_NEAR(s / 6.0, 0.5, 0.2);
}

// ---------------------------------------------------------------------------
// Reports

TEST(Report, CsvLayoutAndRoundTrip) {
    const RunReport r = sample_report();
    const std::string csv = results_csv(r);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "corruption,severity,accuracy");
    EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), 1u + 3u * 5u + 1u);
    EXPECT_NE(csv.find("clean,0,0.8125\n"), std::string::npos);
    const RunReport back = parse_results_csv(csv);
    EXPECT_EQ(back.clean_accuracy, r.clean_accuracy);
    EXPECT_EQ(back.cells, r.cells);
    EXPECT_EQ(results_csv(back), csv);
}

TEST(Report, MeanCorruptionAccuracyMatchesOracle) {
    const RunReport r = sample_report();
    // Oracle: all kinds have the same number of severities, so the mean of
    // per-kind means equals the mean over all cells.
    double s = 0.0;
    for (const auto& c : r.cells) s += c.accuracy;
    EXPECT_NEAR(r.mean_corruption_accuracy(), s / static_cast<double>(r.cells.size()), 1e-12);
    EXPECT_NEAR(parse_results_csv(results_csv(r)).mean_corruption_accuracy(), r.mean_corruption_accuracy(), 1e-12);
    EXPECT_NEAR(r.mean_over_kinds(is_noise), r.kind_mean(CorruptionKind::gaussian_noise), 1e-15);
    EXPECT_TRUE(std::isnan(r.mean_over_kinds([](CorruptionKind) { return false; })));
}

TEST(Report, SummaryRowsAndOrder) {
    RunReport r = sample_report();
    r.epochs.push_back(EpochLog{0, 0.05, {1.0, 0.1, 0.0, 1.03}, 4, 1.5});
    const std::string md = summary_markdown(r);
    const auto at = [&](const std::string& s) { return md.find(s); };
    ASSERT_NE(at("| Mean Corruption Acc |"), std::string::npos);
    EXPECT_LT(at("| Clean |"), at("| Mean Corruption Acc |"));
    EXPECT_LT(at("| Mean Corruption Acc |"), at("| Gaussian Noise |"));
    EXPECT_LT(at("| Gaussian Noise |"), at("| Avg. Noise Acc. |"));
    EXPECT_LT(at("| Avg. Noise Acc. |"), at("| Gaussian Blur |"));
    EXPECT_LT(at("| Gaussian Blur |"), at("| Avg. Blur Acc. |"));
    EXPECT_LT(at("| Avg. Blur Acc. |"), at("| Contrast |"));
    EXPECT_NE(at("| Clean | 81.25 |"), std::string::npos);
    EXPECT_NE(at("## Training loss per epoch"), std::string::npos);
}

TEST(Report, EmitWritesBothFilesAndRejectsBadInput) {
    TempDir dir("report");
    emit_report(sample_report(), dir.path() / "out");
    EXPECT_EQ(read_text(dir.path() / "out" / "results.csv"), results_csv(sample_report()));
    EXPECT_NE(read_text(dir.path() / "out" / "summary.md").find("Mean Corruption Acc"), std::string::npos);
    std::ofstream(dir.path() / "file") << "x";
    EXPECT_THROW(emit_report(sample_report(), dir.path() / "file" / "sub"), IoError);
    EXPECT_THROW(results_csv(RunReport{}), ContractError);
    EXPECT_THROW(parse_results_csv("a,b,c\n"), FormatError);
    EXPECT_THROW(parse_results_csv("corruption,severity,accuracy\nclean,0,x\n"), FormatError);
}

// ---------------------------------------------------------------------------
// Visualizations

TEST(Visualize, SpectralPanelsContract) {
    TempDir dir("spectral");
    const Image img = synthetic_image(3, 1, 0);
    const auto files = visualize_spectral(img, 0.1, dir.path());
    ASSERT_EQ(files.size(), 5u);
    for (const auto& f : files) EXPECT_TRUE(fs::exists(f)) << f;
    EXPECT_TRUE(fs::exists(dir.path() / "scaling.txt"));
    const Image spectrum = read_pnm(dir.path() / "spectrum.pgm");
    EXPECT_EQ(spectrum.height, 32u);
    double top = 0.0;
    for (double v : spectrum.data) top = std::max(top, v);
    EXPECT_EQ(spectrum.at(0, 16, 16), top);  // DC at the center
    EXPECT_THROW(visualize_spectral(img, 0.0, dir.path()), ParameterError);
}

TEST(Visualize, ConstantImageReconstructsExactly) {
    const Image img(3, 32, 32, 0.4);
    const SpectralPanels p = spectral_panels(img, 0.1);
    for (std::size_t i = 0; i < p.original.values.size(); ++i) {
        EXPECT_NEAR(p.reconstruction.values[i], p.original.values[i], 1e-12);
    }
}

TEST(Visualize, ActivationMapsContract) {
    TempDir dir("act");
    TrainConfig cfg = tiny_config(Method::freq);
    cfg.widths = {8, 8};
    Network net = build_model(cfg.model_config(), 22);
    const std::vector<Image> images{synthetic_image(0, 2, 0), synthetic_image(1, 2, 1)};
    const auto files = visualize_activations(net, Normalization{}, 0, images, dir.path() / "a");
    EXPECT_EQ(files.size(), 16u);
    EXPECT_TRUE(fs::exists(dir.path() / "a" / "img01_ch7.pgm"));
    visualize_activations(net, Normalization{}, 0, images, dir.path() / "b");
    for (std::size_t c = 0; c < 8; ++c) {
        EXPECT_EQ(read_text(dir.path() / "a" / activation_file_name(1, c)),
                  read_text(dir.path() / "b" / activation_file_name(1, c)));
    }
    activation_montage({dir.path() / "a", dir.path() / "b"}, 2, dir.path() / "m.pgm");
    const Image m = read_pnm(dir.path() / "m.pgm");
    EXPECT_EQ(m.height, 4u * 33u - 1u);
    EXPECT_EQ(m.width, 8u * 33u - 1u);
    EXPECT_THROW(visualize_activations(net, Normalization{}, 99, images, dir.path() / "c"), ConfigError);
    EXPECT_THROW(visualize_activations(net, Normalization{}, 0, {}, dir.path() / "c"), ConfigError);
    Network narrow = build_model(tiny_config(Method::freq).model_config(), 22);
    EXPECT_THROW(visualize_activations(narrow, Normalization{}, 0, images, dir.path() / "c"), ConfigError);
}

TEST(Visualize, ActivationCorrelationOfIdenticalInputsIsOne) {
    Network net = build_model(ModelConfig{}, 23);
    const std::vector<Image> images{synthetic_image(4, 3, 0)};
    EXPECT_NEAR(activation_correlation(net, images, images, Normalization{}, 1), 1.0, 1e-12);
}

// ---------------------------------------------------------------------------
// Command line

TEST(Cli, ExitCodes) {
    TempDir dir("cli");
    EXPECT_EQ(run_cli("synth-data --out " + (dir.path() / "data").string() +
                      " --train-per-class 2 --test-per-class 2 --classes 2"),
              0);
    std::ofstream(dir.path() / "bad.cfg") << "learning_rate = 0.1\n";
    EXPECT_EQ(run_cli("train --config " + (dir.path() / "bad.cfg").string()), 1);
    EXPECT_EQ(run_cli("train --config " + (dir.path() / "missing.cfg").string()), 3);
    EXPECT_EQ(run_cli("eval --checkpoint " + (dir.path() / "missing.frqr").string() + " --data-dir " +
                      (dir.path() / "data").string() + " --out " + (dir.path() / "o").string()),
              3);
    EXPECT_EQ(run_cli("no-such-command"), 1);
    EXPECT_EQ(run_cli("viz-spectral --input 0 --data-dir " + (dir.path() / "data").string() + " --sigma -1 --out " +
                      (dir.path() / "v").string()),
              1);
}

TEST(Cli, TrainEvalPipelineWritesReports) {
    TempDir dir("pipeline");
    const fs::path data = dir.path() / "data";
    ASSERT_EQ(run_cli("synth-data --out " + data.string() + " --train-per-class 4 --test-per-class 3 --classes 2"), 0);
    std::ofstream(dir.path() / "run.cfg") << "method = freq\nepochs = 1\nbatch_size = 4\nclasses = 0,1\n"
                                             "train_per_class = 4\nwidths = 4,8\nblocks_per_stage = 1\n"
                                             "projection_dim = 8\nreplaced_layers = 1\n";
    const fs::path out = dir.path() / "run";
    ASSERT_EQ(run_cli("train --config " + (dir.path() / "run.cfg").string() + " --data-dir " + data.string() +
                      " --out " + out.string()),
              0);
    EXPECT_TRUE(fs::exists(out / "checkpoint.frqr"));
    ASSERT_EQ(run_cli("eval --checkpoint " + (out / "checkpoint.frqr").string() + " --data-dir " + data.string() +
                      " --kinds gaussian_noise,contrast --severities 1,5 --out " + (dir.path() / "eval").string()),
              0);
    const RunReport r = parse_results_csv(read_text(dir.path() / "eval" / "results.csv"));
    EXPECT_EQ(r.cells.size(), 4u);
    EXPECT_NE(read_text(dir.path() / "eval" / "summary.md").find("Mean Corruption Acc"), std::string::npos);
}

TEST(Cli, GradcheckFailureIsNumericExit) { EXPECT_EQ(run_cli("gradcheck --tolerance 1e-30"), 2); }
