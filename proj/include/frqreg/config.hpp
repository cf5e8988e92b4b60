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

// Training configuration in a flat `key = value` text format. Lines starting
// with '#' are comments. Every key is optional; unknown or repeated keys are
// hard errors. Lists are comma separated.
//
//   method            baseline | freq | supcon | both
//   epochs            integer >= 0
//   batch_size        integer >= 2
//   lr                initial learning rate
//   lr_decay_epochs   epochs at which the rate is multiplied by lr_decay_factor
//                     (default: 50% and 75% of `epochs`)
//   lr_decay_factor   default 0.1
//   momentum          SGD momentum, default 0.9
//   weight_decay      L2 coefficient added to the gradient, default 5e-4
//   lambda            auxiliary low-frequency MSE weight
//   alpha             contrastive loss weight
//   tau               contrastive temperature
//   mask_sigma        Gaussian mask width in normalized frequency units
//   replaced_layers   number of leading conv layers given the dual path
//   seed              initialization / shuffling / augmentation seed
//   classes           CIFAR-10 label ids used, in output order
//   train_per_class   samples per class drawn from the training batches (0 = all)
//   test_per_class    samples per class drawn from the test batch (0 = all)
//   subset_seed       seed of the class-stratified subset draw
//   widths            channel width per stage
//   blocks_per_stage  residual blocks per stage
//   projection_dim    contrastive embedding size
//   crop_padding      zero padding of the random crop
//   flip_probability  horizontal flip probability
//   norm_mean         per-channel normalization mean
//   norm_std          per-channel normalization std
//   eval_batch_size   batch size for evaluation passes
//   data_dir          directory with the CIFAR-10 binary batches
//   out_dir           output directory

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "frqreg/data.hpp"
#include "frqreg/error.hpp"
#include "frqreg/image.hpp"
#include "frqreg/losses.hpp"
#include "frqreg/model.hpp"

namespace frqreg {

struct TrainConfig {
    Method method = Method::baseline;
    std::size_t epochs = 30;
    std::size_t batch_size = 64;
    double lr = 0.05;
    std::vector<std::size_t> lr_decay_epochs;  // empty: 50% and 75% of epochs
    double lr_decay_factor = 0.1;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    LossWeights weights;
    double mask_sigma = 0.1;
    std::size_t replaced_layers = 3;
    std::uint64_t seed = 0;
    std::vector<int> classes{0, 1, 2, 3};
    std::size_t train_per_class = 500;
    std::size_t test_per_class = 0;
    std::uint64_t subset_seed = 0;
    std::vector<std::size_t> widths{16, 32, 64};
    std::size_t blocks_per_stage = 2;
    std::size_t projection_dim = 64;
    std::size_t crop_padding = 4;
    double flip_probability = 0.5;
    Normalization normalization;
    std::size_t eval_batch_size = 256;
    std::filesystem::path data_dir;
    std::filesystem::path out_dir;

    ModelConfig model_config() const {
        ModelConfig m;
        m.method = method;
        m.replaced_layers = replaced_layers;
        m.mask_sigma = mask_sigma;
        m.widths = widths;
        m.blocks_per_stage = blocks_per_stage;
        m.num_classes = classes.size();
        m.projection_dim = projection_dim;
        return m;
    }

    AugmentPolicy augment_policy() const { return AugmentPolicy{crop_padding, flip_probability, seed}; }

    std::vector<std::size_t> decay_epochs() const {
        if (!lr_decay_epochs.empty()) return lr_decay_epochs;
        std::vector<std::size_t> out;
        if (epochs / 2 > 0) out.push_back(epochs / 2);
        if (epochs * 3 / 4 > 0 && epochs * 3 / 4 != epochs / 2) out.push_back(epochs * 3 / 4);
        return out;
    }

    /// Step schedule: lr times decay_factor per decay epoch already reached.
    double lr_at(std::size_t epoch) const {
        double rate = lr;
        for (std::size_t e : decay_epochs()) {
            if (epoch >= e) rate *= lr_decay_factor;
        }
        return rate;
    }

    void validate() const {
        if (batch_size < 2) throw ConfigError("batch_size must be >= 2 (batch norm and the contrastive loss need pairs)");
        if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
        if (!(lr_decay_factor > 0.0) || !std::isfinite(lr_decay_factor)) throw ConfigError("lr_decay_factor must be positive");
        if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0,1)");
        if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw ConfigError("weight_decay must be >= 0");
        if (eval_batch_size < 1) throw ConfigError("eval_batch_size must be >= 1");
        if (classes.size() < 2) throw ConfigError("classes must list at least 2 labels");
        std::set<int> seen;
        for (int c : classes) {
            if (c < 0 || c >= kCifarClasses) throw ConfigError("class id " + std::to_string(c) + " outside 0..9");
            if (!seen.insert(c).second) throw ConfigError("class id " + std::to_string(c) + " listed twice");
        }
        try {
            weights.validate();
            model_config().validate();
            augment_policy().validate();
            normalization.validate(3);
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            throw ConfigError(e.what());
        }
    }

    /// Checks that referenced paths exist (run start).
    void validate_paths() const {
        if (data_dir.empty()) throw ConfigError("data_dir is not set");
        if (!std::filesystem::is_directory(data_dir)) throw IoError("data_dir " + data_dir.string() + " does not exist");
    }
};

namespace config_detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline double to_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) {
        throw ConfigError("'" + key + "': '" + v + "' is not a finite number");
    }
    return out;
}

inline std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
        throw ConfigError("'" + key + "': '" + v + "' is not a non-negative integer");
    }
    return out;
}

inline std::string format_double(double v) {
    char buf[32];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, p);
}

template <typename T>
std::string join(const std::vector<T>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        if constexpr (std::is_floating_point_v<T>) {
            out += format_double(v[i]);
        } else {
            out += std::to_string(v[i]);
        }
    }
    return out;
}

}  // namespace config_detail

inline const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys{
        "method",          "epochs",         "batch_size",      "lr",           "lr_decay_epochs",
        "lr_decay_factor", "momentum",       "weight_decay",    "lambda",       "alpha",
        "tau",             "mask_sigma",     "replaced_layers", "seed",         "classes",
        "train_per_class", "test_per_class", "subset_seed",     "widths",       "blocks_per_stage",
        "projection_dim",  "crop_padding",   "flip_probability", "norm_mean",   "norm_std",
        "eval_batch_size", "data_dir",       "out_dir"};
    return keys;
}

inline void apply_config_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
    using namespace config_detail;
    auto u = [&] { return static_cast<std::size_t>(to_u64(key, value)); };
    auto d = [&] { return to_double(key, value); };
    auto sizes = [&] {
        std::vector<std::size_t> out;
        for (const auto& s : split_list(value)) out.push_back(static_cast<std::size_t>(to_u64(key, s)));
        return out;
    };
    auto reals = [&] {
        std::vector<double> out;
        for (const auto& s : split_list(value)) out.push_back(to_double(key, s));
        return out;
    };
    if (key == "method") {
        try {
            cfg.method = parse_method(value);
        } catch (const Error& e) {
            throw ConfigError(e.what());
        }
    } else if (key == "epochs") cfg.epochs = u();
    else if (key == "batch_size") cfg.batch_size = u();
    else if (key == "lr") cfg.lr = d();
    else if (key == "lr_decay_epochs") cfg.lr_decay_epochs = sizes();
    else if (key == "lr_decay_factor") cfg.lr_decay_factor = d();
    else if (key == "momentum") cfg.momentum = d();
    else if (key == "weight_decay") cfg.weight_decay = d();
    else if (key == "lambda") cfg.weights.lambda = d();
    else if (key == "alpha") cfg.weights.alpha = d();
    else if (key == "tau") cfg.weights.tau = d();
    else if (key == "mask_sigma") cfg.mask_sigma = d();
    else if (key == "replaced_layers") cfg.replaced_layers = u();
    else if (key == "seed") cfg.seed = to_u64(key, value);
    else if (key == "classes") {
        cfg.classes.clear();
        for (std::size_t c : sizes()) cfg.classes.push_back(static_cast<int>(std::min<std::size_t>(c, 1u << 20)));
    } else if (key == "train_per_class") cfg.train_per_class = u();
    else if (key == "test_per_class") cfg.test_per_class = u();
    else if (key == "subset_seed") cfg.subset_seed = to_u64(key, value);
    else if (key == "widths") cfg.widths = sizes();
    else if (key == "blocks_per_stage") cfg.blocks_per_stage = u();
    else if (key == "projection_dim") cfg.projection_dim = u();
    else if (key == "crop_padding") cfg.crop_padding = u();
    else if (key == "flip_probability") cfg.flip_probability = d();
    else if (key == "norm_mean") cfg.normalization.mean = reals();
    else if (key == "norm_std") cfg.normalization.std = reals();
    else if (key == "eval_batch_size") cfg.eval_batch_size = u();
    else if (key == "data_dir") cfg.data_dir = value;
    else if (key == "out_dir") cfg.out_dir = value;
    else {
        std::string known;
        for (const auto& k : config_keys()) known += (known.empty() ? "" : ", ") + k;
        throw ConfigError("unknown config key '" + key + "' (known keys: " + known + ")");
    }
}

inline TrainConfig parse_train_config(const std::string& text) {
    TrainConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::set<std::string> seen;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = config_detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = config_detail::trim(line.substr(0, eq));
        const std::string value = config_detail::trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
        if (!seen.insert(key).second) throw ConfigError("line " + std::to_string(line_no) + ": key '" + key + "' repeated");
        apply_config_value(cfg, key, value);
    }
    cfg.validate();
    return cfg;
}

inline TrainConfig load_train_config(const std::filesystem::path& path) {
    return parse_train_config(detail::read_file(path));
}

/// Canonical text form; parse_train_config(to_text(c)) reproduces c.
inline std::string to_text(const TrainConfig& c) {
    using config_detail::format_double;
    using config_detail::join;
    std::ostringstream os;
    os << "method = " << to_string(c.method) << '\n'
       << "epochs = " << c.epochs << '\n'
       << "batch_size = " << c.batch_size << '\n'
       << "lr = " << format_double(c.lr) << '\n'
       << "lr_decay_epochs = " << join(c.decay_epochs()) << '\n'
       << "lr_decay_factor = " << format_double(c.lr_decay_factor) << '\n'
       << "momentum = " << format_double(c.momentum) << '\n'
       << "weight_decay = " << format_double(c.weight_decay) << '\n'
       << "lambda = " << format_double(c.weights.lambda) << '\n'
       << "alpha = " << format_double(c.weights.alpha) << '\n'
       << "tau = " << format_double(c.weights.tau) << '\n'
       << "mask_sigma = " << format_double(c.mask_sigma) << '\n'
       << "replaced_layers = " << c.replaced_layers << '\n'
       << "seed = " << c.seed << '\n'
       << "classes = " << join(c.classes) << '\n'
       << "train_per_class = " << c.train_per_class << '\n'
       << "test_per_class = " << c.test_per_class << '\n'
       << "subset_seed = " << c.subset_seed << '\n'
       << "widths = " << join(c.widths) << '\n'
       << "blocks_per_stage = " << c.blocks_per_stage << '\n'
       << "projection_dim = " << c.projection_dim << '\n'
       << "crop_padding = " << c.crop_padding << '\n'
       << "flip_probability = " << format_double(c.flip_probability) << '\n'
       << "norm_mean = " << join(c.normalization.mean) << '\n'
       << "norm_std = " << join(c.normalization.std) << '\n'
       << "eval_batch_size = " << c.eval_batch_size << '\n';
    if (!c.data_dir.empty()) os << "data_dir = " << c.data_dir.string() << '\n';
    if (!c.out_dir.empty()) os << "out_dir = " << c.out_dir.string() << '\n';
    return os.str();
}

}  // namespace frqreg
