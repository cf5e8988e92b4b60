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

// Deterministic CIFAR-10-C style corruptions for the asset-free kinds.
//
// All randomness comes from CounterRng keyed by (seed, kind, severity) with
// the element index as counter, so outputs are independent of evaluation
// order. Severity constants live in data/severity_table.txt, compiled in via
// the generated severity_table_data.hpp.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "frqreg/error.hpp"
#include "frqreg/image.hpp"
#include "frqreg/rng.hpp"
#include "frqreg/severity_table_data.hpp"

namespace frqreg {

enum class CorruptionKind {
    gaussian_noise,
    shot_noise,
    impulse_noise,
    speckle_noise,
    gaussian_blur,
    defocus_blur,
    motion_blur,
    zoom_blur,
    pixelate,
    contrast,
    brightness,
    saturate,
    identity,
};

inline constexpr std::array<std::string_view, 13> kCorruptionNames{
    "gaussian_noise", "shot_noise", "impulse_noise", "speckle_noise", "gaussian_blur", "defocus_blur", "motion_blur",
    "zoom_blur",      "pixelate",   "contrast",      "brightness",    "saturate",      "identity"};

/// Benchmark kinds deliberately not implemented (need external assets or a codec).
inline constexpr std::array<std::string_view, 7> kUnsupportedCorruptions{
    "frost", "fog", "snow", "spatter", "glass_blur", "elastic_transform", "jpeg_compression"};

/// The twelve implemented benchmark kinds, in report row order.
inline constexpr std::array<CorruptionKind, 12> kBenchmarkKinds{
    CorruptionKind::gaussian_noise, CorruptionKind::impulse_noise, CorruptionKind::shot_noise,
    CorruptionKind::speckle_noise,  CorruptionKind::gaussian_blur, CorruptionKind::defocus_blur,
    CorruptionKind::motion_blur,    CorruptionKind::zoom_blur,     CorruptionKind::brightness,
    CorruptionKind::contrast,       CorruptionKind::pixelate,      CorruptionKind::saturate};

inline std::string_view to_string(CorruptionKind k) { return kCorruptionNames[static_cast<std::size_t>(k)]; }

inline CorruptionKind parse_corruption(std::string_view name) {
    for (std::size_t i = 0; i < kCorruptionNames.size(); ++i) {
        if (kCorruptionNames[i] == name) return static_cast<CorruptionKind>(i);
    }
    std::string msg = "unknown corruption '" + std::string(name) + "'";
    for (auto u : kUnsupportedCorruptions) {
        if (u == name) {
            msg = "corruption '" + std::string(name) + "' is not implemented";
            break;
        }
    }
    msg += "; out-of-scope kinds:";
    for (auto u : kUnsupportedCorruptions) msg += " " + std::string(u);
    throw SpecError(msg);
}

inline bool is_blur(CorruptionKind k) {
    return k == CorruptionKind::gaussian_blur || k == CorruptionKind::defocus_blur ||
           k == CorruptionKind::motion_blur || k == CorruptionKind::zoom_blur;
}

inline bool is_noise(CorruptionKind k) {
    return k == CorruptionKind::gaussian_noise || k == CorruptionKind::shot_noise ||
           k == CorruptionKind::impulse_noise || k == CorruptionKind::speckle_noise;
}

struct CorruptionSpec {
    CorruptionKind kind = CorruptionKind::identity;
    int severity = 0;  // 0 = identity passthrough, 1..5 = table entries
    std::uint64_t seed = 0;
};

/// Named parameters of one (kind, severity) entry.
struct SeverityParams {
    std::vector<std::pair<std::string, double>> values;

    double get(std::string_view name) const {
        for (const auto& [k, v] : values) {
            if (k == name) return v;
        }
        throw SpecError("severity parameter '" + std::string(name) + "' missing");
    }
    bool operator==(const SeverityParams&) const = default;
};

class SeverityTable {
public:
    static SeverityTable parse(std::string_view text) {
        SeverityTable table;
        std::istringstream in{std::string(text)};
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            std::istringstream ls(line);
            std::string first;
            if (!(ls >> first)) continue;
            if (first == "version") {
                if (!(ls >> table.version_)) throw FormatError("severity table line " + std::to_string(line_no) + ": bad version");
                continue;
            }
            const CorruptionKind kind = parse_corruption(first);
            int severity = 0;
            if (!(ls >> severity) || severity < 1 || severity > 5) {
                throw FormatError("severity table line " + std::to_string(line_no) + ": severity must be 1..5");
            }
            SeverityParams params;
            std::string kv;
            while (ls >> kv) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos) throw FormatError("severity table line " + std::to_string(line_no) + ": expected name=value");
                try {
                    params.values.emplace_back(kv.substr(0, eq), std::stod(kv.substr(eq + 1)));
                } catch (const std::logic_error&) {
                    throw FormatError("severity table line " + std::to_string(line_no) + ": bad number");
                }
            }
            auto& slots = table.entries_[kind];
            if (slots[severity - 1]) throw FormatError("severity table: duplicate entry for " + first);
            slots[severity - 1] = std::move(params);
        }
        if (table.version_ <= 0) throw FormatError("severity table has no version line");
        for (CorruptionKind k : kBenchmarkKinds) {
            auto it = table.entries_.find(k);
            if (it == table.entries_.end()) throw FormatError("severity table lacks " + std::string(to_string(k)));
            for (const auto& s : it->second) {
                if (!s) throw FormatError("severity table incomplete for " + std::string(to_string(k)));
            }
        }
        return table;
    }

    /// The table compiled into the library.
    static const SeverityTable& builtin() {
        static const SeverityTable table = parse(kSeverityTableText);
        return table;
    }

    int version() const { return version_; }

    const SeverityParams& lookup(CorruptionKind kind, int severity) const {
        if (severity == 0) throw ContractError("severity 0 is the identity and has no table entry");
        if (severity < 1 || severity > 5) throw SpecError("severity " + std::to_string(severity) + " outside 1..5");
        if (kind == CorruptionKind::identity) throw ContractError("identity corruption has no table entry");
        auto it = entries_.find(kind);
        if (it == entries_.end() || !it->second[severity - 1]) {
            throw SpecError("no severity entry for " + std::string(to_string(kind)));
        }
        return *it->second[severity - 1];
    }

private:
    int version_ = 0;
    std::map<CorruptionKind, std::array<std::optional<SeverityParams>, 5>> entries_;
};

inline const SeverityParams& severity_params(CorruptionKind kind, int severity) {
    return SeverityTable::builtin().lookup(kind, severity);
}

/// Grid cell of pixel i when n pixels are split into `cells` equal cells.
inline std::size_t pixelate_cell(std::size_t i, std::size_t n, std::size_t cells) { return i * cells / n; }

namespace corruption_detail {

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

/// Edge-clamped bilinear sample of one plane at fractional (row, col).
inline double bilinear(const double* plane, std::size_t h, std::size_t w, double r, double c) {
    r = std::clamp(r, 0.0, static_cast<double>(h - 1));
    c = std::clamp(c, 0.0, static_cast<double>(w - 1));
    const std::size_t r0 = static_cast<std::size_t>(std::floor(r));
    const std::size_t c0 = static_cast<std::size_t>(std::floor(c));
    const std::size_t r1 = std::min(r0 + 1, h - 1);
    const std::size_t c1 = std::min(c0 + 1, w - 1);
    const double fr = r - static_cast<double>(r0);
    const double fc = c - static_cast<double>(c0);
    const double top = plane[r0 * w + c0] * (1.0 - fc) + plane[r0 * w + c1] * fc;
    const double bottom = plane[r1 * w + c0] * (1.0 - fc) + plane[r1 * w + c1] * fc;
    return top * (1.0 - fr) + bottom * fr;
}

/// Index mapping for reflect-101 borders (OpenCV default): -1 -> 1, n -> n-2.
inline std::size_t reflect101(std::ptrdiff_t i, std::size_t n) {
    if (n == 1) return 0;
    const std::ptrdiff_t period = 2 * (static_cast<std::ptrdiff_t>(n) - 1);
    i %= period;
    if (i < 0) i += period;
    if (i >= static_cast<std::ptrdiff_t>(n)) i = period - i;
    return static_cast<std::size_t>(i);
}

inline std::size_t clamp_index(std::ptrdiff_t i, std::size_t n) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(n) - 1));
}

/// 2D correlation of every plane with a square odd-sized kernel.
template <typename BorderFn>
Image filter2d(const Image& img, const std::vector<double>& kernel, std::size_t ksize, BorderFn border) {
    Image out(img.channels, img.height, img.width);
    const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(ksize / 2);
    for (std::size_t ch = 0; ch < img.channels; ++ch) {
        for (std::size_t r = 0; r < img.height; ++r) {
            for (std::size_t c = 0; c < img.width; ++c) {
                double acc = 0.0;
                for (std::ptrdiff_t i = -half; i <= half; ++i) {
                    const std::size_t rr = border(static_cast<std::ptrdiff_t>(r) + i, img.height);
                    for (std::ptrdiff_t j = -half; j <= half; ++j) {
                        const std::size_t cc = border(static_cast<std::ptrdiff_t>(c) + j, img.width);
                        acc += kernel[static_cast<std::size_t>((i + half) * static_cast<std::ptrdiff_t>(ksize) + j + half)] *
                               img.at(ch, rr, cc);
                    }
                }
                out.at(ch, r, c) = acc;
            }
        }
    }
    return out;
}

inline std::vector<double> gaussian_taps(double sigma, std::size_t radius) {
    std::vector<double> taps(2 * radius + 1);
    double s = 0.0;
    for (std::size_t i = 0; i < taps.size(); ++i) {
        const double d = static_cast<double>(i) - static_cast<double>(radius);
        taps[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        s += taps[i];
    }
    for (double& t : taps) t /= s;
    return taps;
}

/// Separable Gaussian with truncation 4 sigma and nearest-edge borders.
inline Image gaussian_blur(const Image& img, double sigma) {
    const std::size_t radius = static_cast<std::size_t>(4.0 * sigma + 0.5);
    const auto taps = gaussian_taps(sigma, radius);
    const std::ptrdiff_t R = static_cast<std::ptrdiff_t>(radius);
    Image tmp(img.channels, img.height, img.width);
    Image out(img.channels, img.height, img.width);
    for (std::size_t ch = 0; ch < img.channels; ++ch) {
        for (std::size_t r = 0; r < img.height; ++r) {
            for (std::size_t c = 0; c < img.width; ++c) {
                double acc = 0.0;
                for (std::ptrdiff_t j = -R; j <= R; ++j) {
                    acc += taps[static_cast<std::size_t>(j + R)] * img.at(ch, r, clamp_index(static_cast<std::ptrdiff_t>(c) + j, img.width));
                }
                tmp.at(ch, r, c) = acc;
            }
        }
        for (std::size_t r = 0; r < img.height; ++r) {
            for (std::size_t c = 0; c < img.width; ++c) {
                double acc = 0.0;
                for (std::ptrdiff_t i = -R; i <= R; ++i) {
                    acc += taps[static_cast<std::size_t>(i + R)] * tmp.at(ch, clamp_index(static_cast<std::ptrdiff_t>(r) + i, img.height), c);
                }
                out.at(ch, r, c) = acc;
            }
        }
    }
    return out;
}

/// Normalized disk on a 17x17 grid, softened by a 3x3 Gaussian.
inline std::vector<double> defocus_kernel(double radius, double alias_blur) {
    constexpr std::size_t n = 17;
    std::vector<double> disk(n * n, 0.0);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double y = static_cast<double>(i) - 8.0, x = static_cast<double>(j) - 8.0;
            if (x * x + y * y <= radius * radius) {
                disk[i * n + j] = 1.0;
                s += 1.0;
            }
        }
    }
    for (double& v : disk) v /= s;
    const auto g = gaussian_taps(alias_blur, 1);
    std::vector<double> g2(9);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) g2[i * 3 + j] = g[i] * g[j];
    }
    Image tmp(1, n, n);
    tmp.data = disk;
    return filter2d(tmp, g2, 3, reflect101).data;
}

inline void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double delta = mx - mn;
    v = mx;
    s = mx > 0.0 ? delta / mx : 0.0;
    if (delta == 0.0) {
        h = 0.0;
        return;
    }
    if (r == mx) {
        h = (g - b) / delta;
    } else if (g == mx) {
        h = 2.0 + (b - r) / delta;
    } else {
        h = 4.0 + (r - g) / delta;
    }
    h /= 6.0;
    h -= std::floor(h);
}

inline void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
    const double h6 = h * 6.0;
    const double sector = std::floor(h6);
    const double f = h6 - sector;
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - f * s);
    const double t = v * (1.0 - (1.0 - f) * s);
    switch (static_cast<int>(sector) % 6) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
}

template <typename Fn>
Image map_hsv(const Image& img, Fn fn) {
    if (img.channels != 3) throw DimensionError("HSV corruptions need 3 channels");
    Image out = img;
    const std::size_t n = img.plane_size();
    for (std::size_t i = 0; i < n; ++i) {
        double h = 0, s = 0, v = 0;
        rgb_to_hsv(img.data[i], img.data[n + i], img.data[2 * n + i], h, s, v);
        fn(h, s, v);
        hsv_to_rgb(h, s, v, out.data[i], out.data[n + i], out.data[2 * n + i]);
    }
    return out;
}

/// Area-average downsample to cells x cells, nearest upsample back. The
/// result is constant on every cell of the grid.
inline Image pixelate(const Image& img, std::size_t cells_h, std::size_t cells_w) {
    Image out(img.channels, img.height, img.width);
    const double sh = static_cast<double>(img.height) / static_cast<double>(cells_h);
    const double sw = static_cast<double>(img.width) / static_cast<double>(cells_w);
    for (std::size_t ch = 0; ch < img.channels; ++ch) {
        std::vector<double> cell(cells_h * cells_w, 0.0);
        for (std::size_t cr = 0; cr < cells_h; ++cr) {
            const double r0 = static_cast<double>(cr) * sh, r1 = r0 + sh;
            for (std::size_t cc = 0; cc < cells_w; ++cc) {
                const double c0 = static_cast<double>(cc) * sw, c1 = c0 + sw;
                double acc = 0.0;
                for (std::size_t r = static_cast<std::size_t>(std::floor(r0)); r < img.height && static_cast<double>(r) < r1; ++r) {
                    const double wr = std::min(r1, static_cast<double>(r + 1)) - std::max(r0, static_cast<double>(r));
                    for (std::size_t c = static_cast<std::size_t>(std::floor(c0)); c < img.width && static_cast<double>(c) < c1; ++c) {
                        const double wc = std::min(c1, static_cast<double>(c + 1)) - std::max(c0, static_cast<double>(c));
                        acc += wr * wc * img.at(ch, r, c);
                    }
                }
                cell[cr * cells_w + cc] = acc / (sh * sw);
            }
        }
        for (std::size_t r = 0; r < img.height; ++r) {
            const std::size_t cr = pixelate_cell(r, img.height, cells_h);
            for (std::size_t c = 0; c < img.width; ++c) {
                out.at(ch, r, c) = cell[cr * cells_w + pixelate_cell(c, img.width, cells_w)];
            }
        }
    }
    return out;
}

}  // namespace corruption_detail

/// Grid side used by pixelate at a severity for an image side of n pixels.
inline std::size_t pixelate_cells(int severity, std::size_t n) {
    const double factor = severity_params(CorruptionKind::pixelate, severity).get("factor");
    return std::max<std::size_t>(1, static_cast<std::size_t>(static_cast<double>(n) * factor));
}

/// Angle (degrees) used by motion blur for a spec.
inline double motion_blur_angle(const CorruptionSpec& spec) {
    const CounterRng rng(spec.seed, fnv1a("corrupt:motion_blur:angle"));
    return -45.0 + 90.0 * rng.uniform(static_cast<std::uint64_t>(spec.severity));
}

/// Applies one corruption. The input is in [0,1]; the output is clamped to
/// [0,1]. Severity 0 and the identity kind return the input unchanged.
inline Image corrupt(const Image& image, const CorruptionSpec& spec) {
    using namespace corruption_detail;
    if (spec.severity < 0 || spec.severity > 5) {
        throw SpecError("severity " + std::to_string(spec.severity) + " outside 0..5");
    }
    if (static_cast<std::size_t>(spec.kind) >= kCorruptionNames.size()) throw SpecError("unknown corruption kind");
    if (spec.severity == 0 || spec.kind == CorruptionKind::identity) return image;
    if (image.data.size() != image.channels * image.height * image.width) throw DimensionError("image buffer size mismatch");

    const SeverityParams& p = severity_params(spec.kind, spec.severity);
    const CounterRng rng = CounterRng(spec.seed, fnv1a("corrupt")).fork(
        static_cast<std::uint64_t>(spec.kind) * 16 + static_cast<std::uint64_t>(spec.severity));
    Image out = image;
    auto& d = out.data;

    switch (spec.kind) {
        case CorruptionKind::gaussian_noise: {
            const double sigma = p.get("sigma");
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += rng.normal(i) * sigma;
            break;
        }
        case CorruptionKind::shot_noise: {
            const double rate = p.get("rate");
            for (std::size_t i = 0; i < d.size(); ++i) {
                d[i] = static_cast<double>(rng.poisson(i, clamp01(d[i]) * rate)) / rate;
            }
            break;
        }
        case CorruptionKind::impulse_noise: {
            const double amount = p.get("amount");
            for (std::size_t i = 0; i < d.size(); ++i) {
                const auto b = rng.block(i);
                const double u = static_cast<double>(b[0]) * 0x1.0p-32;
                if (u < amount) d[i] = (b[1] & 1u) ? 1.0 : 0.0;
            }
            break;
        }
        case CorruptionKind::speckle_noise: {
            const double sigma = p.get("sigma");
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += d[i] * rng.normal(i) * sigma;
            break;
        }
        case CorruptionKind::gaussian_blur:
            out = gaussian_blur(image, p.get("sigma"));
            break;
        case CorruptionKind::defocus_blur:
            out = filter2d(image, defocus_kernel(p.get("radius"), p.get("alias_blur")), 17, reflect101);
            break;
        case CorruptionKind::motion_blur: {
            // One-sided Gaussian-weighted streak along a random direction.
            const std::size_t taps = 2 * static_cast<std::size_t>(p.get("radius")) + 1;
            const double sigma = p.get("sigma");
            const double angle = motion_blur_angle(spec) * std::numbers::pi / 180.0;
            const double dr = -std::sin(angle), dc = std::cos(angle);
            std::vector<double> weights(taps);
            double wsum = 0.0;
            for (std::size_t t = 0; t < taps; ++t) {
                weights[t] = std::exp(-static_cast<double>(t * t) / (2.0 * sigma * sigma));
                wsum += weights[t];
            }
            for (std::size_t ch = 0; ch < image.channels; ++ch) {
                const double* plane = image.data.data() + ch * image.plane_size();
                for (std::size_t r = 0; r < image.height; ++r) {
                    for (std::size_t c = 0; c < image.width; ++c) {
                        double acc = 0.0;
                        for (std::size_t t = 0; t < taps; ++t) {
                            const double s = static_cast<double>(t);
                            acc += weights[t] * bilinear(plane, image.height, image.width,
                                                         static_cast<double>(r) + s * dr, static_cast<double>(c) + s * dc);
                        }
                        out.at(ch, r, c) = acc / wsum;
                    }
                }
            }
            break;
        }
        case CorruptionKind::zoom_blur: {
            const double step = p.get("step");
            const std::size_t count = static_cast<std::size_t>(p.get("count"));
            const double cr = (static_cast<double>(image.height) - 1.0) / 2.0;
            const double cc = (static_cast<double>(image.width) - 1.0) / 2.0;
            Image acc = image;
            for (std::size_t z = 0; z < count; ++z) {
                const double zoom = 1.0 + step * static_cast<double>(z);
                for (std::size_t ch = 0; ch < image.channels; ++ch) {
                    const double* plane = image.data.data() + ch * image.plane_size();
                    for (std::size_t r = 0; r < image.height; ++r) {
                        for (std::size_t c = 0; c < image.width; ++c) {
                            acc.at(ch, r, c) += bilinear(plane, image.height, image.width,
                                                         cr + (static_cast<double>(r) - cr) / zoom,
                                                         cc + (static_cast<double>(c) - cc) / zoom);
                        }
                    }
                }
            }
            for (std::size_t i = 0; i < d.size(); ++i) d[i] = acc.data[i] / static_cast<double>(count + 1);
            break;
        }
        case CorruptionKind::pixelate:
            out = pixelate(image, pixelate_cells(spec.severity, image.height), pixelate_cells(spec.severity, image.width));
            break;
        case CorruptionKind::contrast: {
            const double factor = p.get("factor");
            for (std::size_t ch = 0; ch < image.channels; ++ch) {
                double m = 0.0;
                const std::size_t n = image.plane_size();
                for (std::size_t i = 0; i < n; ++i) m += image.data[ch * n + i];
                m /= static_cast<double>(n);
                for (std::size_t i = 0; i < n; ++i) d[ch * n + i] = (image.data[ch * n + i] - m) * factor + m;
            }
            break;
        }
        case CorruptionKind::brightness: {
            const double shift = p.get("shift");
            out = map_hsv(image, [shift](double&, double&, double& v) { v = clamp01(v + shift); });
            break;
        }
        case CorruptionKind::saturate: {
            const double scale = p.get("scale"), shift = p.get("shift");
            out = map_hsv(image, [scale, shift](double&, double& s, double&) { s = clamp01(s * scale + shift); });
            break;
        }
        case CorruptionKind::identity:
            break;
    }
    for (double& v : out.data) v = clamp01(v);
    return out;
}

}  // namespace frqreg
