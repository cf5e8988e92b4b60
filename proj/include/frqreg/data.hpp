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

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "frqreg/error.hpp"
#include "frqreg/image.hpp"
#include "frqreg/rng.hpp"
#include "frqreg/tensor.hpp"

namespace frqreg {

inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarPixels = 3 * kCifarSide * kCifarSide;
inline constexpr std::size_t kCifarRecord = kCifarPixels + 1;
inline constexpr int kCifarClasses = 10;

enum class Split { train, test };

struct Dataset {
    std::vector<Image> images;  // 3x32x32 in [0,1]
    std::vector<int> labels;
    std::vector<std::string> sources;  // one entry per contributing file
    std::vector<std::size_t> origin;   // index of each element in the concatenated source files

    std::size_t size() const { return images.size(); }
};

inline std::vector<std::string> cifar_files(Split split) {
    if (split == Split::test) return {"test_batch.bin"};
    return {"data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin", "data_batch_5.bin"};
}

/// Parses one CIFAR-10 binary batch: records of 1 label byte followed by the
/// R, G and B planes (32x32 row-major each).
inline void parse_cifar_batch(const std::string& bytes, const std::string& source, Dataset& ds) {
    if (bytes.size() % kCifarRecord != 0) {
        throw FormatError(source + ": size " + std::to_string(bytes.size()) + " is not a multiple of " +
                          std::to_string(kCifarRecord));
    }
    const std::size_t n = bytes.size() / kCifarRecord;
    const std::size_t base = ds.origin.empty() ? 0 : ds.origin.back() + 1;
    for (std::size_t r = 0; r < n; ++r) {
        const auto* rec = reinterpret_cast<const unsigned char*>(bytes.data() + r * kCifarRecord);
        if (rec[0] >= kCifarClasses) {
            throw FormatError(source + ": record " + std::to_string(r) + " has label byte " + std::to_string(rec[0]));
        }
        Image img(3, kCifarSide, kCifarSide);
        for (std::size_t i = 0; i < kCifarPixels; ++i) img.data[i] = static_cast<double>(rec[1 + i]) / 255.0;
        ds.images.push_back(std::move(img));
        ds.labels.push_back(rec[0]);
        ds.origin.push_back(base + r);
    }
    ds.sources.push_back(source);
}

inline Dataset load_cifar10(const std::filesystem::path& dir, Split split) {
    Dataset ds;
    for (const std::string& name : cifar_files(split)) {
        const auto path = dir / name;
        if (!std::filesystem::exists(path)) throw IoError("missing CIFAR-10 batch " + path.string());
        parse_cifar_batch(detail::read_file(path), path.string(), ds);
    }
    return ds;
}

inline std::string encode_cifar_record(int label, const Image& img) {
    if (img.channels != 3 || img.height != kCifarSide || img.width != kCifarSide) {
        throw DimensionError("CIFAR records hold 3x32x32 images");
    }
    std::string rec(kCifarRecord, '\0');
    rec[0] = static_cast<char>(label);
    for (std::size_t i = 0; i < kCifarPixels; ++i) rec[1 + i] = static_cast<char>(to_byte(img.data[i]));
    return rec;
}

/// Stratified, seeded sample of `per_class` elements from each listed class.
/// Output is grouped by class in the listed order, and within a class keeps
/// the original dataset order.
inline Dataset subset(const Dataset& ds, const std::vector<int>& classes, std::size_t per_class, std::uint64_t seed) {
    Dataset out;
    out.sources = ds.sources;
    const CounterRng rng(seed, fnv1a("subset"));
    for (int cls : classes) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            if (ds.labels[i] == cls) idx.push_back(i);
        }
        if (idx.size() < per_class) {
            throw DataError("class " + std::to_string(cls) + " has " + std::to_string(idx.size()) +
                            " samples, " + std::to_string(per_class) + " requested");
        }
        // Keyed Fisher-Yates: swap position j with a draw from [j, n).
        const CounterRng cls_rng = rng.fork(static_cast<std::uint64_t>(cls));
        for (std::size_t j = 0; j < per_class; ++j) {
            const std::size_t k = j + cls_rng.below(j, idx.size() - j);
            std::swap(idx[j], idx[k]);
        }
        std::vector<std::size_t> chosen(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(per_class));
        std::sort(chosen.begin(), chosen.end());
        for (std::size_t i : chosen) {
            out.images.push_back(ds.images[i]);
            out.labels.push_back(ds.labels[i]);
            out.origin.push_back(ds.origin.empty() ? i : ds.origin[i]);
        }
    }
    return out;
}

/// Maps labels through `classes` so the listed classes become 0..k-1.
inline void remap_labels(Dataset& ds, const std::vector<int>& classes) {
    for (int& y : ds.labels) {
        auto it = std::find(classes.begin(), classes.end(), y);
        if (it == classes.end()) throw DataError("label " + std::to_string(y) + " not among selected classes");
        y = static_cast<int>(it - classes.begin());
    }
}

// ---------------------------------------------------------------------------

struct AugmentPolicy {
    std::size_t crop_padding = 4;
    double flip_probability = 0.5;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(flip_probability >= 0.0 && flip_probability <= 1.0)) throw ConfigError("flip_probability must be in [0,1]");
    }
};

/// Concrete random choices for one augmentation.
struct AugmentDraw {
    std::size_t offset_row = 0;  // in [0, 2*padding]
    std::size_t offset_col = 0;
    bool flip = false;
};

/// Draws keyed by (epoch, sample index) so replays are exact.
inline AugmentDraw draw_augment(const AugmentPolicy& policy, std::uint64_t epoch, std::uint64_t sample) {
    const CounterRng rng = CounterRng(policy.seed, fnv1a("augment")).fork(epoch);
    const auto b = rng.block(sample);
    const std::uint64_t span = 2 * policy.crop_padding + 1;
    AugmentDraw d;
    d.offset_row = static_cast<std::size_t>((static_cast<std::uint64_t>(b[0]) * span) >> 32);
    d.offset_col = static_cast<std::size_t>((static_cast<std::uint64_t>(b[1]) * span) >> 32);
    d.flip = static_cast<double>(b[2]) * 0x1.0p-32 < policy.flip_probability;
    return d;
}

inline Image flip_horizontal(const Image& img) {
    Image out(img.channels, img.height, img.width);
    for (std::size_t ch = 0; ch < img.channels; ++ch) {
        for (std::size_t r = 0; r < img.height; ++r) {
            for (std::size_t c = 0; c < img.width; ++c) out.at(ch, r, c) = img.at(ch, r, img.width - 1 - c);
        }
    }
    return out;
}

/// Zero-pad by `padding`, take the window at the drawn offset, optionally flip.
inline Image apply_augment(const Image& img, std::size_t padding, const AugmentDraw& draw) {
    Image out(img.channels, img.height, img.width, 0.0);
    for (std::size_t ch = 0; ch < img.channels; ++ch) {
        for (std::size_t r = 0; r < img.height; ++r) {
            const std::ptrdiff_t sr = static_cast<std::ptrdiff_t>(r + draw.offset_row) - static_cast<std::ptrdiff_t>(padding);
            if (sr < 0 || sr >= static_cast<std::ptrdiff_t>(img.height)) continue;
            for (std::size_t c = 0; c < img.width; ++c) {
                const std::ptrdiff_t sc = static_cast<std::ptrdiff_t>(c + draw.offset_col) - static_cast<std::ptrdiff_t>(padding);
                if (sc < 0 || sc >= static_cast<std::ptrdiff_t>(img.width)) continue;
                out.at(ch, r, c) = img.at(ch, static_cast<std::size_t>(sr), static_cast<std::size_t>(sc));
            }
        }
    }
    return draw.flip ? flip_horizontal(out) : out;
}

inline Image augment(const Image& img, const AugmentPolicy& policy, std::uint64_t epoch, std::uint64_t sample) {
    return apply_augment(img, policy.crop_padding, draw_augment(policy, epoch, sample));
}

// ---------------------------------------------------------------------------

struct Normalization {
    std::vector<double> mean{0.4914, 0.4822, 0.4465};
    std::vector<double> std{0.2470, 0.2435, 0.2616};

    void validate(std::size_t channels) const {
        if (mean.size() != channels || std.size() != channels) throw ConfigError("normalization needs one mean/std per channel");
        for (double s : std) {
            if (!(s > 0.0)) throw ConfigError("normalization std must be positive");
        }
    }
};

inline Image normalize(const Image& img, const Normalization& norm) {
    norm.validate(img.channels);
    Image out = img;
    const std::size_t n = img.plane_size();
    for (std::size_t ch = 0; ch < img.channels; ++ch) {
        for (std::size_t i = 0; i < n; ++i) out.data[ch * n + i] = (img.data[ch * n + i] - norm.mean[ch]) / norm.std[ch];
    }
    return out;
}

inline Image denormalize(const Image& img, const Normalization& norm) {
    norm.validate(img.channels);
    Image out = img;
    const std::size_t n = img.plane_size();
    for (std::size_t ch = 0; ch < img.channels; ++ch) {
        for (std::size_t i = 0; i < n; ++i) out.data[ch * n + i] = img.data[ch * n + i] * norm.std[ch] + norm.mean[ch];
    }
    return out;
}

/// Stacks images into an [N,C,H,W] tensor.
inline Tensor stack_images(const std::vector<Image>& images) {
    if (images.empty()) throw DimensionError("cannot stack an empty batch");
    const Image& first = images.front();
    std::vector<double> data;
    data.reserve(images.size() * first.data.size());
    for (const Image& img : images) {
        if (img.channels != first.channels || img.height != first.height || img.width != first.width) {
            throw DimensionError("batch images differ in shape");
        }
        data.insert(data.end(), img.data.begin(), img.data.end());
    }
    return Tensor::from_data({images.size(), first.channels, first.height, first.width}, std::move(data));
}

// ---------------------------------------------------------------------------
// Synthetic shape dataset in CIFAR-10 binary layout, for offline tests and
// demos. Class identity is carried by the outline of a centered-ish shape;
// color, position, scale and a fine-grained background texture are random.

inline constexpr std::array<const char*, 10> kSyntheticClassNames{
    "disc", "square", "triangle", "cross", "ring", "hbar", "vbar", "diamond", "x", "frame"};

inline bool synthetic_shape_contains(int cls, double y, double x, double size) {
    const double ay = std::abs(y), ax = std::abs(x), r = std::sqrt(x * x + y * y);
    switch (cls) {
        case 0: return r <= size;
        case 1: return ay <= size * 0.85 && ax <= size * 0.85;
        case 2: return y <= size * 0.8 && y >= -size * 0.9 + 1.9 * ax;
        case 3: return (ay <= size * 0.3 && ax <= size) || (ax <= size * 0.3 && ay <= size);
        case 4: return r <= size && r >= size * 0.55;
        case 5: return ay <= size * 0.35 && ax <= size * 1.1;
        case 6: return ax <= size * 0.35 && ay <= size * 1.1;
        case 7: return ax + ay <= size * 1.1;
        case 8: return std::abs(ax - ay) <= size * 0.28 && ax <= size && ay <= size;
        case 9: return ay <= size && ax <= size && (ay >= size * 0.6 || ax >= size * 0.6);
        default: return false;
    }
}

inline Image synthetic_image(int cls, std::uint64_t seed, std::uint64_t index) {
    const CounterRng rng = CounterRng(seed, fnv1a("synthetic")).fork(index);
    const auto u = [&](std::uint64_t k) { return rng.uniform(k); };
    Image img(3, kCifarSide, kCifarSide);
    const double size = 7.0 + 5.0 * u(0);
    const double cy = 15.5 + (u(1) - 0.5) * 8.0;
    const double cx = 15.5 + (u(2) - 0.5) * 8.0;
    const double angle = (u(3) - 0.5) * 0.6;
    std::array<double, 3> fg{}, bg{};
    for (std::size_t ch = 0; ch < 3; ++ch) {
        fg[ch] = 0.2 + 0.8 * u(4 + ch);
        bg[ch] = 0.8 * u(7 + ch);
    }
    // keep contrast between shape and background
    double diff = 0.0;
    for (std::size_t ch = 0; ch < 3; ++ch) diff += std::abs(fg[ch] - bg[ch]);
    if (diff < 0.6) {
        for (std::size_t ch = 0; ch < 3; ++ch) fg[ch] = 1.0 - bg[ch];
    }
    const double texture = 0.15 * u(10);
    const double period = 2.0 + 2.0 * u(11);
    const double ca = std::cos(angle), sa = std::sin(angle);
    for (std::size_t r = 0; r < kCifarSide; ++r) {
        for (std::size_t c = 0; c < kCifarSide; ++c) {
            const double dy = static_cast<double>(r) - cy, dx = static_cast<double>(c) - cx;
            const double y = ca * dy - sa * dx, x = sa * dy + ca * dx;
            const bool inside = synthetic_shape_contains(cls, y, x, size);
            const double stripes = texture * std::sin(2.0 * 3.14159265358979 * (static_cast<double>(r + c)) / period);
            const double grain = 0.05 * (rng.uniform(100 + r * kCifarSide + c) - 0.5);
            for (std::size_t ch = 0; ch < 3; ++ch) {
                const double base = inside ? fg[ch] : bg[ch];
                img.at(ch, r, c) = std::clamp(base + stripes + grain, 0.0, 1.0);
            }
        }
    }
    return img;
}

/// Writes data_batch_1..5.bin and test_batch.bin with balanced labels cycling
/// over `classes` classes (at most 10).
inline void write_synthetic_cifar(const std::filesystem::path& dir, std::size_t train_per_class,
                                  std::size_t test_per_class, int classes, std::uint64_t seed) {
    if (classes < 2 || classes > kCifarClasses) throw ConfigError("synthetic dataset needs 2..10 classes");
    std::filesystem::create_directories(dir);
    const auto train_files = cifar_files(Split::train);
    const std::size_t train_total = train_per_class * static_cast<std::size_t>(classes);
    std::vector<std::string> bodies(train_files.size());
    for (std::size_t i = 0; i < train_total; ++i) {
        const int cls = static_cast<int>(i % static_cast<std::size_t>(classes));
        bodies[i * bodies.size() / train_total] += encode_cifar_record(cls, synthetic_image(cls, seed, i));
    }
    for (std::size_t f = 0; f < train_files.size(); ++f) detail::write_file(dir / train_files[f], bodies[f]);
    std::string test;
    const std::size_t test_total = test_per_class * static_cast<std::size_t>(classes);
    for (std::size_t i = 0; i < test_total; ++i) {
        const int cls = static_cast<int>(i % static_cast<std::size_t>(classes));
        test += encode_cifar_record(cls, synthetic_image(cls, seed ^ 0x5eed7e57ULL, i));
    }
    detail::write_file(dir / "test_batch.bin", test);
}

}  // namespace frqreg
