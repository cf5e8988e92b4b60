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

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <vector>

#include "frqreg/corruptions.hpp"
#include "frqreg/image.hpp"
#include "frqreg/rng.hpp"

using namespace frqreg;

namespace {

Image random_image(std::uint64_t seed, std::size_t h = 32, std::size_t w = 32) {
    const CounterRng rng(seed, fnv1a("test-corruptions"));
    Image img(3, h, w);
    for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = rng.uniform(i);
    return img;
}

double mean_abs_diff(const Image& a, const Image& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) s += std::abs(a.data[i] - b.data[i]);
    return s / static_cast<double>(a.data.size());
}

std::vector<CorruptionKind> all_kinds() {
    std::vector<CorruptionKind> out;
    for (std::size_t i = 0; i < kCorruptionNames.size(); ++i) out.push_back(static_cast<CorruptionKind>(i));
    return out;
}

std::string table_file_text() {
    std::ifstream in(FRQREG_SEVERITY_TABLE_PATH);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST(Corrupt, SeverityZeroIsIdentityForEveryKind) {
    const Image img = random_image(1);
    for (CorruptionKind k : all_kinds()) {
        EXPECT_EQ(corrupt(img, CorruptionSpec{k, 0, 123}), img) << to_string(k);
    }
    for (int s = 1; s <= 5; ++s) EXPECT_EQ(corrupt(img, CorruptionSpec{CorruptionKind::identity, s, 5}), img);
}

TEST(Corrupt, DeterministicAndSeedSensitive) {
    const Image img = random_image(2);
    for (CorruptionKind k : kBenchmarkKinds) {
        for (int s = 1; s <= 5; ++s) {
            const Image a = corrupt(img, CorruptionSpec{k, s, 77});
            const Image b = corrupt(img, CorruptionSpec{k, s, 77});
            EXPECT_EQ(a, b) << to_string(k) << " " << s;
            EXPECT_NE(a, img) << to_string(k) << " " << s;
            for (double v : a.data) {
                ASSERT_GE(v, 0.0);
                ASSERT_LE(v, 1.0);
            }
        }
        if (is_noise(k)) {
            EXPECT_NE(corrupt(img, CorruptionSpec{k, 3, 1}), corrupt(img, CorruptionSpec{k, 3, 2})) << to_string(k);
        }
    }
}

TEST(Corrupt, InputBufferUntouched) {
    const Image img = random_image(3);
    const Image copy = img;
    for (CorruptionKind k : kBenchmarkKinds) corrupt(img, CorruptionSpec{k, 5, 9});
    EXPECT_EQ(img, copy);
}

TEST(Corrupt, GaussianNoiseFoldedNormalStatistic) {
    // Mid-gray keeps clipping negligible (the largest sigma is 0.1, 5 sigma away).
    const Image img(3, 32, 32, 0.5);
    for (int s = 1; s <= 5; ++s) {
        const double sigma = severity_params(CorruptionKind::gaussian_noise, s).get("sigma");
        const double expected = sigma * std::sqrt(2.0 / std::numbers::pi);
        const double got = mean_abs_diff(corrupt(img, CorruptionSpec{CorruptionKind::gaussian_noise, s, 11}), img);
        EXPECT_NEAR(got, expected, 0.05 * expected) << s;
    }
}

TEST(Corrupt, SpeckleNoiseScalesWithIntensity) {
    const Image img(3, 32, 32, 0.5);
    const double sigma = severity_params(CorruptionKind::speckle_noise, 5).get("sigma");
    const double expected = 0.5 * sigma * std::sqrt(2.0 / std::numbers::pi);
    const double got = mean_abs_diff(corrupt(img, CorruptionSpec{CorruptionKind::speckle_noise, 5, 12}), img);
    EXPECT_NEAR(got, expected, 0.05 * expected);
    const Image black(3, 32, 32, 0.0);
    EXPECT_EQ(corrupt(black, CorruptionSpec{CorruptionKind::speckle_noise, 5, 12}), black);
}

TEST(Corrupt, ShotNoiseIsUnbiased) {
    const Image img(3, 32, 32, 0.4);
    for (int s : {1, 5}) {
        const Image out = corrupt(img, CorruptionSpec{CorruptionKind::shot_noise, s, 13});
        double m = 0.0;
        for (double v : out.data) m += v;
        m /= static_cast<double>(out.data.size());
        const double rate = severity_params(CorruptionKind::shot_noise, s).get("rate");
        const double se = std::sqrt(0.4 / rate / static_cast<double>(out.data.size()));
        EXPECT_NEAR(m, 0.4, 5.0 * se) << s;
    }
}

TEST(Corrupt, ImpulseNoiseReplacesConfiguredFraction) {
    const Image img(3, 64, 64, 0.5);
    for (int s = 1; s <= 5; ++s) {
        const double amount = severity_params(CorruptionKind::impulse_noise, s).get("amount");
        const Image out = corrupt(img, CorruptionSpec{CorruptionKind::impulse_noise, s, 14});
        std::size_t hit = 0;
        for (std::size_t i = 0; i < out.data.size(); ++i) {
            if (out.data[i] != 0.5) {
                EXPECT_TRUE(out.data[i] == 0.0 || out.data[i] == 1.0);
                ++hit;
            }
        }
        const double n = static_cast<double>(out.data.size());
        const double sd = std::sqrt(n * amount * (1.0 - amount));
        EXPECT_NEAR(static_cast<double>(hit), n * amount, 5.0 * sd) << s;
    }
}

TEST(Corrupt, PixelateIsPiecewiseConstantOnGrid) {
    const Image img = random_image(15);
    for (int s = 1; s <= 5; ++s) {
        const Image out = corrupt(img, CorruptionSpec{CorruptionKind::pixelate, s, 0});
        const std::size_t cells = pixelate_cells(s, 32);
        EXPECT_EQ(cells, static_cast<std::size_t>(32 * severity_params(CorruptionKind::pixelate, s).get("factor")));
        for (std::size_t ch = 0; ch < 3; ++ch)
            for (std::size_t r = 0; r < 32; ++r)
                for (std::size_t c = 0; c < 32; ++c) {
                    // Every pixel equals the first pixel of its cell.
                    std::size_t r0 = r, c0 = c;
                    while (r0 > 0 && pixelate_cell(r0 - 1, 32, cells) == pixelate_cell(r, 32, cells)) --r0;
                    while (c0 > 0 && pixelate_cell(c0 - 1, 32, cells) == pixelate_cell(c, 32, cells)) --c0;
                    ASSERT_EQ(out.at(ch, r, c), out.at(ch, r0, c0));
                }
    }
    EXPECT_EQ(pixelate_cells(5, 32), 20u);
}

TEST(Corrupt, PixelatePreservesMeanOfConstantBlocks) {
    const Image flat(3, 32, 32, 0.3);
    const Image out = corrupt(flat, CorruptionSpec{CorruptionKind::pixelate, 5, 0});
    for (double v : out.data) EXPECT_NEAR(v, 0.3, 1e-12);
}

TEST(Corrupt, BlursPreserveConstantImages) {
    const Image flat(3, 32, 32, 0.6);
    for (CorruptionKind k : kBenchmarkKinds) {
        if (!is_blur(k)) continue;
        for (int s = 1; s <= 5; ++s) {
            const Image out = corrupt(flat, CorruptionSpec{k, s, 16});
            for (double v : out.data) ASSERT_NEAR(v, 0.6, 1e-12) << to_string(k) << " " << s;
        }
    }
}

TEST(Corrupt, BlursReduceHighFrequencyEnergy) {
    Image checker(3, 32, 32);
    for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t r = 0; r < 32; ++r)
            for (std::size_t c = 0; c < 32; ++c) checker.at(ch, r, c) = (r + c) % 2 ? 0.8 : 0.2;
    auto tv = [](const Image& im) {
        double s = 0.0;
        for (std::size_t r = 0; r < 32; ++r)
            for (std::size_t c = 0; c + 1 < 32; ++c) s += std::abs(im.at(0, r, c + 1) - im.at(0, r, c));
        return s;
    };
    for (CorruptionKind k : kBenchmarkKinds) {
        if (!is_blur(k)) continue;
        EXPECT_LT(tv(corrupt(checker, CorruptionSpec{k, 5, 17})), tv(checker)) << to_string(k);
    }
}

TEST(Corrupt, ContrastPreservesChannelMean) {
    const Image img = random_image(18);
    const Image out = corrupt(img, CorruptionSpec{CorruptionKind::contrast, 3, 0});
    const double f = severity_params(CorruptionKind::contrast, 3).get("factor");
    for (std::size_t ch = 0; ch < 3; ++ch) {
        double mi = 0.0, mo = 0.0;
        for (std::size_t i = 0; i < 1024; ++i) {
            mi += img.data[ch * 1024 + i];
            mo += out.data[ch * 1024 + i];
        }
        EXPECT_NEAR(mi, mo, 1e-9);
        mi /= 1024.0;
        EXPECT_NEAR(out.data[ch * 1024 + 5], (img.data[ch * 1024 + 5] - mi) * f + mi, 1e-12);
    }
}

TEST(Corrupt, PhotometricKindsOnMidGrayRarelyClip) {
    const Image gray(3, 32, 32, 0.5);
    for (CorruptionKind k : {CorruptionKind::brightness, CorruptionKind::contrast, CorruptionKind::saturate}) {
        for (int s = 1; s <= 5; ++s) {
            const Image out = corrupt(gray, CorruptionSpec{k, s, 0});
            std::size_t clipped = 0;
            for (double v : out.data) clipped += (v <= 0.0 || v >= 1.0) ? 1 : 0;
            EXPECT_LE(static_cast<double>(clipped), 0.2 * static_cast<double>(out.data.size())) << to_string(k);
        }
    }
}

TEST(Corrupt, BrightnessShiftsValueChannel) {
    const Image gray(3, 4, 4, 0.5);
    for (int s = 1; s <= 5; ++s) {
        const double shift = severity_params(CorruptionKind::brightness, s).get("shift");
        for (double v : corrupt(gray, CorruptionSpec{CorruptionKind::brightness, s, 0}).data) EXPECT_NEAR(v, 0.5 + shift, 1e-12);
    }
}

TEST(Corrupt, SaturateLeavesGrayAloneWithoutShift) {
    const Image gray(3, 4, 4, 0.5);
    for (int s = 1; s <= 3; ++s) {
        for (double v : corrupt(gray, CorruptionSpec{CorruptionKind::saturate, s, 0}).data) EXPECT_NEAR(v, 0.5, 1e-12);
    }
    // A colored pixel loses saturation at severity 1.
    Image px(3, 1, 1);
    px.data = {0.8, 0.4, 0.2};
    const Image out = corrupt(px, CorruptionSpec{CorruptionKind::saturate, 1, 0});
    EXPECT_LT(out.data[0] - out.data[2], px.data[0] - px.data[2]);
    EXPECT_NEAR(std::max({out.data[0], out.data[1], out.data[2]}), 0.8, 1e-12);
}

TEST(Corrupt, OutOfScopeAndInvalidSpecs) {
    const Image img = random_image(19);
    EXPECT_THROW(corrupt(img, CorruptionSpec{CorruptionKind::gaussian_noise, 6, 0}), SpecError);
    EXPECT_THROW(corrupt(img, CorruptionSpec{CorruptionKind::gaussian_noise, -1, 0}), SpecError);
    EXPECT_THROW(corrupt(img, CorruptionSpec{static_cast<CorruptionKind>(99), 1, 0}), SpecError);
    for (auto name : kUnsupportedCorruptions) {
        try {
            parse_corruption(name);
            ADD_FAILURE() << name;
        } catch (const SpecError& e) {
            EXPECT_NE(std::string(e.what()).find("not implemented"), std::string::npos);
        }
    }
    EXPECT_THROW(parse_corruption("blurry"), SpecError);
    EXPECT_EQ(parse_corruption("zoom_blur"), CorruptionKind::zoom_blur);
}

TEST(SeverityTable, BuiltinMatchesDataFile) {
    const std::string text = table_file_text();
    ASSERT_FALSE(text.empty());
    const SeverityTable file = SeverityTable::parse(text);
    EXPECT_EQ(file.version(), SeverityTable::builtin().version());
    for (CorruptionKind k : kBenchmarkKinds)
        for (int s = 1; s <= 5; ++s) EXPECT_EQ(file.lookup(k, s), severity_params(k, s)) << to_string(k) << s;
}

TEST(SeverityTable, DocumentedMonotoneDirections) {
    auto series = [](CorruptionKind k, const char* name) {
        std::vector<double> v;
        for (int s = 1; s <= 5; ++s) v.push_back(severity_params(k, s).get(name));
        return v;
    };
    auto increasing = [](const std::vector<double>& v) {
        for (std::size_t i = 1; i < v.size(); ++i)
            if (!(v[i] > v[i - 1])) return false;
        return true;
    };
    auto decreasing = [](const std::vector<double>& v) {
        for (std::size_t i = 1; i < v.size(); ++i)
            if (!(v[i] < v[i - 1])) return false;
        return true;
    };
    EXPECT_TRUE(increasing(series(CorruptionKind::gaussian_noise, "sigma")));
    EXPECT_TRUE(decreasing(series(CorruptionKind::shot_noise, "rate")));
    EXPECT_TRUE(increasing(series(CorruptionKind::impulse_noise, "amount")));
    EXPECT_TRUE(increasing(series(CorruptionKind::speckle_noise, "sigma")));
    EXPECT_TRUE(increasing(series(CorruptionKind::gaussian_blur, "sigma")));
    EXPECT_TRUE(increasing(series(CorruptionKind::defocus_blur, "radius")));
    EXPECT_TRUE(increasing(series(CorruptionKind::motion_blur, "sigma")));
    EXPECT_TRUE(increasing(series(CorruptionKind::zoom_blur, "count")));
    EXPECT_TRUE(decreasing(series(CorruptionKind::pixelate, "factor")));
    const auto contrast = series(CorruptionKind::contrast, "factor");
    EXPECT_TRUE(decreasing(contrast));
    for (double c : contrast) EXPECT_LT(c, 1.0);
    EXPECT_TRUE(increasing(series(CorruptionKind::brightness, "shift")));
    EXPECT_EQ(&severity_params(CorruptionKind::contrast, 2), &severity_params(CorruptionKind::contrast, 2));
}

TEST(SeverityTable, LookupContracts) {
    EXPECT_THROW(severity_params(CorruptionKind::gaussian_noise, 0), ContractError);
    EXPECT_THROW(severity_params(CorruptionKind::identity, 1), ContractError);
    EXPECT_THROW(severity_params(CorruptionKind::gaussian_noise, 6), SpecError);
}

TEST(SeverityTable, ParseErrors) {
    EXPECT_THROW(SeverityTable::parse("gaussian_noise 1 sigma=0.1\n"), FormatError);
    std::string text = table_file_text();
    EXPECT_THROW(SeverityTable::parse(text + "gaussian_noise 1 sigma=0.2\n"), FormatError);
    EXPECT_THROW(SeverityTable::parse(text + "gaussian_noise 6 sigma=0.2\n"), FormatError);
    EXPECT_THROW(SeverityTable::parse("version 1\ngaussian_noise 1 sigma=abc\n"), FormatError);
    EXPECT_THROW(SeverityTable::parse("version 1\nfog 1 x=1\n"), SpecError);
}
