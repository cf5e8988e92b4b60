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

// Command line front end. Exit codes: 0 success, 1 validation/config error,
// 2 numeric-integrity failure, 3 I/O error.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <new>
#include <optional>
#include <string>
#include <vector>

#include "frqreg/checkpoint.hpp"
#include "frqreg/config.hpp"
#include "frqreg/corruptions.hpp"
#include "frqreg/data.hpp"
#include "frqreg/gradcheck.hpp"
#include "frqreg/harness.hpp"
#include "frqreg/image.hpp"
#include "frqreg/visualize.hpp"

namespace fs = std::filesystem;
using namespace frqreg;

namespace {

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto comma = s.find(',', start);
        const std::string item = s.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        if (!item.empty()) out.push_back(item);
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

bool is_index(const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

std::vector<int> checkpoint_classes(const Checkpoint& ckpt, std::size_t num_classes) {
    std::vector<int> classes;
    if (const auto* c = ckpt.find("config.classes")) {
        for (double v : c->values) classes.push_back(static_cast<int>(v));
    } else {
        for (std::size_t i = 0; i < num_classes; ++i) classes.push_back(static_cast<int>(i));
    }
    if (classes.size() != num_classes) throw ConfigError("checkpoint class list does not match the classifier size");
    return classes;
}

/// An input is either a file path or, with --data-dir, an index into the test batch.
Image load_input(const std::string& spec, const std::string& data_dir) {
    if (is_index(spec) && !data_dir.empty()) {
        const Dataset test = load_cifar10(data_dir, Split::test);
        const std::size_t idx = std::stoul(spec);
        if (idx >= test.size()) throw ConfigError("image index " + spec + " beyond the test batch");
        return test.images[idx];
    }
    if (is_index(spec)) throw ConfigError("numeric input '" + spec + "' needs --data-dir");
    return load_image(spec);
}

int cmd_train(const std::string& config_path, const std::string& data_dir, const std::string& out,
              std::optional<std::uint64_t> seed) {
    TrainConfig cfg = load_train_config(config_path);
    if (!data_dir.empty()) cfg.data_dir = data_dir;
    if (!out.empty()) cfg.out_dir = out;
    if (seed) cfg.seed = *seed;
    if (cfg.out_dir.empty()) throw ConfigError("no output directory (--out or out_dir)");
    cfg.validate();
    cfg.validate_paths();
    ensure_directory(cfg.out_dir);

    const Dataset train_set = load_split(cfg.data_dir, Split::train, cfg.classes, cfg.train_per_class, cfg.subset_seed);
    const Dataset test_set = load_split(cfg.data_dir, Split::test, cfg.classes, cfg.test_per_class, cfg.subset_seed);
    std::cout << "method " << to_string(cfg.method) << ", " << train_set.size() << " training / " << test_set.size()
              << " test images, " << cfg.epochs << " epochs\n";
    detail::write_file(cfg.out_dir / "config_used.txt", to_text(cfg));

    TrainResult result = train(cfg, train_set, &std::cout);
    result.report.clean_accuracy = evaluate_clean(result.network, test_set, cfg.normalization, cfg.eval_batch_size);
    std::cout << "clean accuracy " << *result.report.clean_accuracy << '\n';

    save_checkpoint(cfg.out_dir / "checkpoint.frqr", result.checkpoint);
    detail::write_file(cfg.out_dir / "train_log.csv", steps_csv(result.steps));
    emit_report(result.report, cfg.out_dir);
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir, const std::string& kinds_arg,
             const std::string& sev_arg, std::uint64_t seed, const std::string& out, std::size_t per_class,
             std::size_t batch_size) {
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    Network net = restore_network(ckpt);
    const Normalization norm = read_normalization(ckpt);
    const auto classes = checkpoint_classes(ckpt, net.config.num_classes);
    if (!fs::is_directory(data_dir)) throw IoError("data directory " + data_dir + " does not exist");

    std::vector<CorruptionKind> kinds;
    if (kinds_arg == "all") {
        kinds.assign(kBenchmarkKinds.begin(), kBenchmarkKinds.end());
    } else {
        for (const auto& k : split_commas(kinds_arg)) kinds.push_back(parse_corruption(k));
    }
    std::vector<int> severities;
    for (const auto& s : split_commas(sev_arg)) {
        if (!is_index(s)) throw ConfigError("bad severity '" + s + "'");
        severities.push_back(std::stoi(s));
    }

    const Dataset test_set = load_split(data_dir, Split::test, classes, per_class, 0);
    RunReport report;
    report.clean_accuracy = evaluate_clean(net, test_set, norm, batch_size);
    std::cout << "clean accuracy " << *report.clean_accuracy << '\n';
    report.cells = evaluate_corrupted(net, test_set, kinds, severities, seed, norm, batch_size, &std::cout);
    std::cout << "mean corruption accuracy " << report.mean_corruption_accuracy() << '\n';
    emit_report(report, out);
    return 0;
}

int cmd_corrupt(const std::string& input, const std::string& kind, int severity, std::uint64_t seed,
                const std::string& output) {
    const Image img = load_image(input);
    save_image(output, corrupt(img, CorruptionSpec{parse_corruption(kind), severity, seed}));
    return 0;
}

int cmd_viz_spectral(const std::string& input, double sigma, const std::string& out, const std::string& data_dir) {
    const Image img = load_input(input, data_dir);
    if (img.channels != 3 || img.height != 32 || img.width != 32) throw DimensionError("viz-spectral expects 3x32x32");
    for (const auto& f : visualize_spectral(img, sigma, out)) std::cout << f.string() << '\n';
    return 0;
}

int cmd_viz_activations(const std::string& ckpt_path, std::size_t layer, const std::string& inputs,
                        const std::string& out, const std::string& data_dir) {
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    Network net = restore_network(ckpt);
    std::vector<Image> images;
    for (const auto& s : split_commas(inputs)) images.push_back(load_input(s, data_dir));
    for (const auto& f : visualize_activations(net, read_normalization(ckpt), layer, images, out)) {
        std::cout << f.string() << '\n';
    }
    return 0;
}

int cmd_montage(const std::string& dirs, std::size_t images, const std::string& output) {
    std::vector<fs::path> paths;
    for (const auto& d : split_commas(dirs)) paths.emplace_back(d);
    activation_montage(paths, images, output);
    return 0;
}

int cmd_gradcheck(double tolerance) {
    const GradCheckReport report = gradcheck_suite(tolerance);
    print_gradcheck_report(std::cout, report);
    return report.passed() ? 0 : static_cast<int>(ExitCode::numeric);
}

int cmd_synth(const std::string& out, std::size_t train_per_class, std::size_t test_per_class, int classes,
              std::uint64_t seed) {
    write_synthetic_cifar(out, train_per_class, test_per_class, classes, seed);
    std::cout << "wrote synthetic shape dataset (" << classes << " classes) to " << out << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"frqreg: robustness regularizers for small CNNs"};
    app.require_subcommand(1);

    std::string config, data_dir, out, checkpoint, kinds = "all", severities = "1,2,3,4,5", input, output, kind, inputs,
                                                   dirs;
    std::uint64_t seed = 0;
    std::optional<std::uint64_t> train_seed;
    int severity = 0, classes = 10;
    double sigma = 0.1, tolerance = 1e-4;
    std::size_t layer = 0, per_class = 0, batch_size = 256, train_per_class = 500, test_per_class = 100, images = 1;

    auto* train_cmd = app.add_subcommand("train", "train a model from a config file");
    train_cmd->add_option("--config", config, "key=value config file")->required();
    train_cmd->add_option("--data-dir", data_dir, "directory with CIFAR-10 binary batches");
    train_cmd->add_option("--out", out, "output directory");
    train_cmd->add_option("--seed", train_seed, "override the config seed");

    auto* eval_cmd = app.add_subcommand("eval", "clean and corrupted evaluation of a checkpoint");
    eval_cmd->add_option("--checkpoint", checkpoint)->required();
    eval_cmd->add_option("--data-dir", data_dir)->required();
    eval_cmd->add_option("--kinds", kinds, "comma list of corruption kinds, or 'all'");
    eval_cmd->add_option("--severities", severities, "comma list within 1..5");
    eval_cmd->add_option("--seed", seed, "corruption seed");
    eval_cmd->add_option("--out", out)->required();
    eval_cmd->add_option("--test-per-class", per_class, "test images per class (0 = all)");
    eval_cmd->add_option("--batch-size", batch_size);

    auto* corrupt_cmd = app.add_subcommand("corrupt", "apply one corruption to one image");
    corrupt_cmd->add_option("--input", input, "PGM/PPM or raw 3072-byte image")->required();
    corrupt_cmd->add_option("--kind", kind)->required();
    corrupt_cmd->add_option("--severity", severity)->required();
    corrupt_cmd->add_option("--seed", seed);
    corrupt_cmd->add_option("--output", output)->required();

    auto* spectral_cmd = app.add_subcommand("viz-spectral", "five-panel low-pass filtering view");
    spectral_cmd->add_option("--input", input, "image path, or test-batch index with --data-dir")->required();
    spectral_cmd->add_option("--sigma", sigma);
    spectral_cmd->add_option("--out", out)->required();
    spectral_cmd->add_option("--data-dir", data_dir);

    auto* act_cmd = app.add_subcommand("viz-activations", "per-channel activation maps of one conv layer");
    act_cmd->add_option("--checkpoint", checkpoint)->required();
    act_cmd->add_option("--layer", layer)->required();
    act_cmd->add_option("--inputs", inputs, "comma list of image paths or test-batch indices")->required();
    act_cmd->add_option("--out", out)->required();
    act_cmd->add_option("--data-dir", data_dir);

    auto* montage_cmd = app.add_subcommand("montage", "side-by-side panel from viz-activations directories");
    montage_cmd->add_option("--dirs", dirs, "comma list of activation directories")->required();
    montage_cmd->add_option("--images", images)->required();
    montage_cmd->add_option("--output", output)->required();

    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    grad_cmd->add_option("--tolerance", tolerance);

    auto* synth_cmd = app.add_subcommand("synth-data", "write a synthetic shape dataset in CIFAR-10 binary layout");
    synth_cmd->add_option("--out", out)->required();
    synth_cmd->add_option("--train-per-class", train_per_class);
    synth_cmd->add_option("--test-per-class", test_per_class);
    synth_cmd->add_option("--classes", classes);
    synth_cmd->add_option("--seed", seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(ExitCode::validation);
    }

    try {
        if (*train_cmd) return cmd_train(config, data_dir, out, train_seed);
        if (*eval_cmd) return cmd_eval(checkpoint, data_dir, kinds, severities, seed, out, per_class, batch_size);
        if (*corrupt_cmd) return cmd_corrupt(input, kind, severity, seed, output);
        if (*spectral_cmd) return cmd_viz_spectral(input, sigma, out, data_dir);
        if (*act_cmd) return cmd_viz_activations(checkpoint, layer, inputs, out, data_dir);
        if (*montage_cmd) return cmd_montage(dirs, images, output);
        if (*grad_cmd) return cmd_gradcheck(tolerance);
        if (*synth_cmd) return cmd_synth(out, train_per_class, test_per_class, classes, seed);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(e.exit_code());
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::io);
    } catch (const std::bad_alloc&) {
        std::cerr << "error: out of memory\n";
        return static_cast<int>(ExitCode::io);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::validation);
    }
    return static_cast<int>(ExitCode::validation);
}
