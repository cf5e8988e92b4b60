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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "frqreg/corruptions.hpp"
#include "frqreg/data.hpp"
#include "frqreg/rng.hpp"

using namespace frqreg;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = fs::temp_directory_path() / ("frqreg_test_data_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

Image random_image(std::uint64_t seed) {
    const CounterRng rng(seed, fnv1a("test-data"));
    Image img(3, 32, 32);
    for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = rng.uniform(i);
    return img;
}

// A record written byte by byte, independent of the library encoder.
std::string handmade_record(unsigned char label, unsigned char first, unsigned char fill) {
    std::string rec(1 + 3072, static_cast<char>(fill));
    rec[0] = static_cast<char>(label);
    rec[1] = static_cast<char>(first);
    return rec;
}

Dataset labeled_dataset(const std::vector<int>& counts) {
    Dataset ds;
    std::size_t k = 0;
    for (std::size_t cls = 0; cls < counts.size(); ++cls) {
        for (int i = 0; i < counts[cls]; ++i) {
            Image img(3, 32, 32, static_cast<double>(k) / 1000.0);
            ds.images.push_back(img);
            ds.labels.push_back(static_cast<int>(cls));
            ds.origin.push_back(k++);
        }
    }
    return ds;
}

}  // namespace

TEST(ParseCifar, HandBuiltTwoRecordFixture) {
    const std::string bytes = handmade_record(7, 255, 0) + handmade_record(3, 0, 51);
    Dataset ds;
    parse_cifar_batch(bytes, "fixture", ds);
    ASSERT_EQ(ds.size(), 2u);
    EXPECT_EQ(ds.labels, (std::vector<int>{7, 3}));
    EXPECT_EQ(ds.images[0].at(0, 0, 0), 1.0);
    EXPECT_EQ(ds.images[0].at(0, 0, 1), 0.0);
    EXPECT_EQ(ds.images[1].at(0, 0, 0), 0.0);
    EXPECT_EQ(ds.images[1].at(2, 31, 31), 51.0 / 255.0);
    EXPECT_EQ(ds.origin, (std::vector<std::size_t>{0, 1}));
}

TEST(ParseCifar, PlaneLayoutIsRgbRowMajor) {
    std::string rec(3073, '\0');
    rec[0] = 1;
    rec[1 + 0 * 1024 + 2 * 32 + 5] = static_cast<char>(10);   // R at (2,5)
    rec[1 + 1 * 1024 + 31 * 32 + 0] = static_cast<char>(20);  // G at (31,0)
    rec[1 + 2 * 1024 + 0 * 32 + 31] = static_cast<char>(30);  // B at (0,31)
    Dataset ds;
    parse_cifar_batch(rec, "layout", ds);
    EXPECT_EQ(ds.images[0].at(0, 2, 5), 10.0 / 255.0);
    EXPECT_EQ(ds.images[0].at(1, 31, 0), 20.0 / 255.0);
    EXPECT_EQ(ds.images[0].at(2, 0, 31), 30.0 / 255.0);
}

TEST(ParseCifar, FormatErrors) {
    Dataset ds;
    EXPECT_THROW(parse_cifar_batch(std::string(3072, '\0'), "short", ds), FormatError);
    EXPECT_THROW(parse_cifar_batch(handmade_record(10, 0, 0), "label", ds), FormatError);
    EXPECT_THROW(parse_cifar_batch(handmade_record(1, 0, 0) + "x", "tail", ds), FormatError);
}

TEST(LoadCifar, RoundTripThroughFilesKeepsOrder) {
    TempDir dir("load");
    std::string test;
    std::vector<Image> imgs;
    for (int i = 0; i < 5; ++i) {
        Image img = random_image(i);
        for (double& v : img.data) v = std::round(v * 255.0) / 255.0;
        imgs.push_back(img);
        test += encode_cifar_record(i * 2, img);
    }
    detail::write_file(dir.path() / "test_batch.bin", test);
    const Dataset ds = load_cifar10(dir.path(), Split::test);
    ASSERT_EQ(ds.size(), 5u);
    for (int i = 0; i < 5; ++i) {
        EXPECT_EQ(ds.labels[i], i * 2);
        EXPECT_EQ(ds.images[i], imgs[i]);
        EXPECT_EQ(ds.origin[i], static_cast<std::size_t>(i));
    }
    EXPECT_THROW(load_cifar10(dir.path(), Split::train), IoError);
}

TEST(LoadCifar, TrainSplitConcatenatesFiveBatches) {
    TempDir dir("train");
    write_synthetic_cifar(dir.path(), 5, 2, 4, 1);
    const Dataset train = load_cifar10(dir.path(), Split::train);
    EXPECT_EQ(train.size(), 20u);
    EXPECT_EQ(train.sources.size(), 5u);
    for (std::size_t i = 0; i < train.size(); ++i) EXPECT_EQ(train.origin[i], i);
    const Dataset test = load_cifar10(dir.path(), Split::test);
    EXPECT_EQ(test.size(), 8u);
    std::map<int, int> counts;
    for (int y : train.labels) ++counts[y];
    EXPECT_EQ(counts, (std::map<int, int>{{0, 5}, {1, 5}, {2, 5}, {3, 5}}));
}

TEST(Subset, ExactBalanceAndDeterminism) {
    const Dataset ds = labeled_dataset({30, 40, 25});
    const Dataset a = subset(ds, {0, 1}, 10, 3);
    ASSERT_EQ(a.size(), 20u);
    EXPECT_EQ(std::count(a.labels.begin(), a.labels.end(), 0), 10);
    EXPECT_EQ(std::count(a.labels.begin(), a.labels.end(), 1), 10);
    const Dataset b = subset(ds, {0, 1}, 10, 3);
    EXPECT_EQ(a.origin, b.origin);
    const Dataset c = subset(ds, {0, 1}, 10, 4);
    EXPECT_NE(a.origin, c.origin);
    std::set<std::size_t> unique(a.origin.begin(), a.origin.end());
    EXPECT_EQ(unique.size(), 20u);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(ds.labels[a.origin[i]], a.labels[i]);
}

TEST(Subset, InsufficientSamplesIsDataError) {
    const Dataset ds = labeled_dataset({5, 5});
    EXPECT_THROW(subset(ds, {0, 1}, 6, 0), DataError);
    EXPECT_THROW(subset(ds, {2}, 1, 0), DataError);
    EXPECT_EQ(subset(ds, {1}, 5, 0).size(), 5u);
}

TEST(Subset, RemapLabels) {
    Dataset ds = labeled_dataset({2, 2, 2});
    Dataset s = subset(ds, {2, 0}, 2, 0);
    remap_labels(s, {2, 0});
    EXPECT_EQ(s.labels, (std::vector<int>{0, 0, 1, 1}));
    EXPECT_THROW(remap_labels(ds, {0, 1}), DataError);
}

TEST(Augment, ForcedFlipTwiceIsIdentity) {
    const Image img = random_image(10);
    EXPECT_EQ(flip_horizontal(flip_horizontal(img)), img);
    const AugmentDraw flip{4, 4, true};
    const Image once = apply_augment(img, 4, flip);
    EXPECT_EQ(apply_augment(once, 4, flip), img);
    EXPECT_EQ(once.at(1, 3, 0), img.at(1, 3, 31));
}

TEST(Augment, CenteredNoFlipIsIdentity) {
    const Image img = random_image(11);
    EXPECT_EQ(apply_augment(img, 4, AugmentDraw{4, 4, false}), img);
    AugmentPolicy p;
    p.crop_padding = 0;
    p.flip_probability = 0.0;
    for (std::uint64_t i = 0; i < 10; ++i) EXPECT_EQ(augment(img, p, 3, i), img);
}

TEST(Augment, CropShiftsWithZeroFill) {
    const Image img = random_image(12);
    const Image out = apply_augment(img, 4, AugmentDraw{0, 8, false});
    // Window starts 4 rows above and 4 columns right of the original frame.
    for (std::size_t c = 0; c < 32; ++c) EXPECT_EQ(out.at(0, 0, c), 0.0);
    EXPECT_EQ(out.at(0, 4, 0), img.at(0, 0, 4));
    EXPECT_EQ(out.at(2, 31, 27), img.at(2, 27, 31));
    EXPECT_EQ(out.at(2, 31, 28), 0.0);
}

TEST(Augment, DeterministicAndCoversRange) {
    const Image img = random_image(13);
    AugmentPolicy p;
    p.seed = 5;
    std::set<std::size_t> rows, cols;
    int flips = 0;
    for (std::uint64_t i = 0; i < 400; ++i) {
        EXPECT_EQ(augment(img, p, 2, i), augment(img, p, 2, i));
        const AugmentDraw d = draw_augment(p, 2, i);
        ASSERT_LE(d.offset_row, 8u);
        ASSERT_LE(d.offset_col, 8u);
        rows.insert(d.offset_row);
        cols.insert(d.offset_col);
        flips += d.flip ? 1 : 0;
        EXPECT_EQ(augment(img, p, 2, i).data.size(), img.data.size());
    }
    EXPECT_EQ(rows.size(), 9u);
    EXPECT_EQ(cols.size(), 9u);
    EXPECT_NEAR(flips, 200, 50);
    const AugmentDraw a = draw_augment(p, 2, 0), b = draw_augment(p, 3, 0);
    EXPECT_FALSE(a.offset_row == b.offset_row && a.offset_col == b.offset_col && a.flip == b.flip &&
                 draw_augment(p, 2, 1).offset_row == draw_augment(p, 3, 1).offset_row &&
                 draw_augment(p, 2, 1).offset_col == draw_augment(p, 3, 1).offset_col);
}

TEST(Augment, PolicyValidation) {
    AugmentPolicy p;
    p.flip_probability = 1.5;
    EXPECT_THROW(p.validate(), ConfigError);
}

TEST(Normalize, MeansMapToZero) {
    const Normalization norm;
    Image img(3, 4, 4);
    for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t i = 0; i < 16; ++i) img.data[ch * 16 + i] = norm.mean[ch];
    for (double v : normalize(img, norm).data) EXPECT_EQ(v, 0.0);
}

TEST(Normalize, AffineAndInvertible) {
    const Normalization norm;
    const Image x = random_image(14);
    const Image nx = normalize(x, norm);
    const Image back = denormalize(nx, norm);
    for (std::size_t i = 0; i < x.data.size(); ++i) EXPECT_NEAR(back.data[i], x.data[i], 1e-12);
    // normalize(a x + b) = a normalize(x) + (a m + b - m) / s per channel.
    const double a = 0.5, b = 0.2;
    Image y = x;
    for (double& v : y.data) v = a * v + b;
    const Image ny = normalize(y, norm);
    for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t i = 0; i < 1024; i += 97) {
            const std::size_t k = ch * 1024 + i;
            EXPECT_NEAR(ny.data[k], a * nx.data[k] + (a * norm.mean[ch] + b - norm.mean[ch]) / norm.std[ch], 1e-12);
        }
}

TEST(Normalize, Validation) {
    Normalization bad;
    bad.std = {0.2, 0.0, 0.2};
    EXPECT_THROW(normalize(random_image(15), bad), ConfigError);
    bad = Normalization{};
    bad.mean = {0.5};
    EXPECT_THROW(normalize(random_image(15), bad), ConfigError);
}

TEST(Pipeline, CorruptBeforeNormalizeAugmentLast) {
    // Eval path: corruption sees [0,1] pixels; feeding normalized values
    // would be clamped away.
    const Normalization norm;
    const Image x = random_image(16);
    const Image eval = normalize(corrupt(x, CorruptionSpec{CorruptionKind::contrast, 5, 0}), norm);
    const Image wrong = corrupt(normalize(x, norm), CorruptionSpec{CorruptionKind::contrast, 5, 0});
    EXPECT_NE(eval, wrong);
    for (double v : wrong.data) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
    // Train path: augmentation after normalization zero-fills in normalized
    // space (the padded border is the dataset mean color).
    const Image train = apply_augment(normalize(x, norm), 4, AugmentDraw{0, 0, false});
    EXPECT_EQ(train.at(0, 0, 0), 0.0);
    EXPECT_EQ(train.at(0, 4, 4), normalize(x, norm).at(0, 0, 0));
}

TEST(StackImages, ShapeAndErrors) {
    const Tensor t = stack_images({random_image(1), random_image(2)});
    EXPECT_EQ(t.shape(), (Shape{2, 3, 32, 32}));
    EXPECT_EQ(t.data()[3072], random_image(2).data[0]);
    EXPECT_THROW(stack_images({}), DimensionError);
    EXPECT_THROW(stack_images({random_image(1), Image(3, 16, 16)}), DimensionError);
}

TEST(Synthetic, BalancedValidRecords) {
    for (int cls = 0; cls < 10; ++cls) {
        const Image img = synthetic_image(cls, 3, 7);
        for (double v : img.data) {
            ASSERT_GE(v, 0.0);
            ASSERT_LE(v, 1.0);
        }
        EXPECT_EQ(img, synthetic_image(cls, 3, 7));
    }
    EXPECT_NE(synthetic_image(0, 3, 7), synthetic_image(1, 3, 7));
    TempDir dir("synth");
    EXPECT_THROW(write_synthetic_cifar(dir.path(), 1, 1, 11, 0), ConfigError);
}
