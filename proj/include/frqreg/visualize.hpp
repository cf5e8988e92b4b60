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

// Graymap emitters: the five-panel low-pass filtering view of one image and
// per-channel activation maps of a conv layer.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "frqreg/data.hpp"
#include "frqreg/error.hpp"
#include "frqreg/harness.hpp"
#include "frqreg/image.hpp"
#include "frqreg/model.hpp"
#include "frqreg/spectral.hpp"

namespace frqreg {

inline constexpr std::array<const char*, 5> kSpectralPanels{"original.pgm", "mask.pgm", "spectrum.pgm",
                                                            "filtered_spectrum.pgm", "reconstruction.pgm"};

/// Fixed [0,1] -> [0,255] mapping used for image-valued panels.
inline std::vector<std::uint8_t> to_gray_fixed(const std::vector<double>& v) {
    std::vector<std::uint8_t> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = to_byte(v[i]);
    return out;
}

/// Linear mapping of [0, top] to [0,255]; top <= 0 gives an all-black panel.
inline std::vector<std::uint8_t> to_gray_scaled(const std::vector<double>& v, double top) {
    std::vector<std::uint8_t> out(v.size(), 0);
    if (!(top > 0.0)) return out;
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = to_byte(v[i] / top);
    return out;
}

struct SpectralPanels {
    std::size_t height = 0, width = 0;                 // image panels
    std::size_t spectrum_height = 0, spectrum_width = 0;  // padded grid of mask/spectra
    spectral::Image2D original, mask, log_spectrum, log_filtered, reconstruction;
};

/// Luma plane, zero-padded (centered) to a power of two when needed, filtered
/// with the centered Gaussian mask and cropped back.
inline SpectralPanels spectral_panels(const Image& image, double sigma) {
    if (image.channels != 3) throw DimensionError("viz-spectral expects a 3-channel image");
    if (!(sigma > 0.0)) throw ParameterError("sigma must be positive");
    SpectralPanels p;
    p.height = image.height;
    p.width = image.width;
    p.original = spectral::Image2D{image.height, image.width, luma(image)};
    const std::size_t H = spectral::next_power_of_two(image.height), W = spectral::next_power_of_two(image.width);
    p.spectrum_height = H;
    p.spectrum_width = W;
    spectral::Image2D padded{H, W, std::vector<double>(H * W, 0.0)};
    const std::size_t r0 = (H - image.height) / 2, c0 = (W - image.width) / 2;
    for (std::size_t r = 0; r < image.height; ++r) {
        for (std::size_t c = 0; c < image.width; ++c) {
            padded.values[(r + r0) * W + c + c0] = p.original.values[r * image.width + c];
        }
    }
    const spectral::GaussianMaskSpec spec{0.0, 0.0, sigma};
    p.mask = spectral::gaussian_mask(spec, H, W);
    const spectral::Spectrum s = spectral::fft2(padded);
    p.log_spectrum = spectral::log_magnitude(s);
    p.log_filtered = spectral::log_magnitude(spectral::apply_mask(s, p.mask));
    p.reconstruction = spectral::lowpass_reconstruct_padded(p.original, spec);
    return p;
}

/// Writes the five panels plus `scaling.txt` into `out_dir`. Image panels use
/// the fixed [0,1] mapping; the mask uses [0,1]; both spectra share the
/// original spectrum's maximum so they are directly comparable.
inline std::vector<std::filesystem::path> visualize_spectral(const Image& image, double sigma,
                                                             const std::filesystem::path& out_dir) {
    const SpectralPanels p = spectral_panels(image, sigma);
    ensure_directory(out_dir);
    const double top = *std::max_element(p.log_spectrum.values.begin(), p.log_spectrum.values.end());
    std::vector<std::filesystem::path> files;
    auto emit = [&](const char* name, std::size_t h, std::size_t w, const std::vector<std::uint8_t>& v) {
        files.push_back(out_dir / name);
        write_plain_pgm(files.back(), h, w, v);
    };
    emit(kSpectralPanels[0], p.height, p.width, to_gray_fixed(p.original.values));
    emit(kSpectralPanels[1], p.spectrum_height, p.spectrum_width, to_gray_fixed(p.mask.values));
    emit(kSpectralPanels[2], p.spectrum_height, p.spectrum_width, to_gray_scaled(p.log_spectrum.values, top));
    emit(kSpectralPanels[3], p.spectrum_height, p.spectrum_width, to_gray_scaled(p.log_filtered.values, top));
    emit(kSpectralPanels[4], p.height, p.width, to_gray_fixed(p.reconstruction.values));

    std::ostringstream os;
    os << "sigma " << sigma << '\n'
       << "image_size " << p.height << 'x' << p.width << '\n'
       << "spectrum_size " << p.spectrum_height << 'x' << p.spectrum_width << '\n'
       << "padding_rows " << p.spectrum_height - p.height << '\n'
       << "padding_cols " << p.spectrum_width - p.width << '\n'
       << "original.pgm gray = round(255 * clamp(luma, 0, 1))\n"
       << "mask.pgm gray = round(255 * mask)\n"
       << "spectrum.pgm gray = round(255 * log1p|F| / " << top << ")\n"
       << "filtered_spectrum.pgm gray = round(255 * log1p|F*G| / " << top << ")\n"
       << "reconstruction.pgm gray = round(255 * clamp(value, 0, 1))\n"
       << "spectra are DC-centered\n";
    detail::write_file(out_dir / "scaling.txt", os.str());
    return files;
}

// ---------------------------------------------------------------------------
// Activations

inline constexpr std::size_t kActivationChannels = 8;

/// Output of conv unit `layer` (flat index over stem, block conv1, conv2,
/// shortcut) for one image in [0,1], in eval mode: [K,H',W'].
inline Tensor conv_activation(Network& net, const Image& image, const Normalization& norm, std::size_t layer) {
    const std::size_t count = net.conv_units().size();
    if (layer >= count) {
        throw ConfigError("layer index " + std::to_string(layer) + " out of range (model has " +
                          std::to_string(count) + " conv layers)");
    }
    NoGradGuard no_grad;
    Tensor captured;
    forward_features(net, stack_images({normalize(image, norm)}), Mode::eval, [&](std::size_t i, const Tensor& t) {
        if (i == layer) captured = t;
    });
    return reshape(captured.detach(), {captured.dim(1), captured.dim(2), captured.dim(3)});
}

/// Pearson correlation of two equal-length vectors; 0 when either is constant.
inline double pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.empty()) throw DimensionError("pearson needs equal non-empty inputs");
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

/// Mean Pearson correlation over images and the first `channels` channels
/// between activations of clean and corrupted versions of the same images.
inline double activation_correlation(Network& net, const std::vector<Image>& clean, const std::vector<Image>& corrupted,
                                     const Normalization& norm, std::size_t layer,
                                     std::size_t channels = kActivationChannels) {
    if (clean.size() != corrupted.size() || clean.empty()) throw DimensionError("need matching non-empty image lists");
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < clean.size(); ++i) {
        const Tensor a = conv_activation(net, clean[i], norm, layer);
        const Tensor b = conv_activation(net, corrupted[i], norm, layer);
        const std::size_t plane = a.dim(1) * a.dim(2);
        for (std::size_t c = 0; c < std::min(channels, a.dim(0)); ++c) {
            s += pearson(a.data().subspan(c * plane, plane), b.data().subspan(c * plane, plane));
            ++n;
        }
    }
    return s / static_cast<double>(n);
}

/// Per-map min-max scaling to [0,255]; a constant map becomes all zeros.
inline std::vector<std::uint8_t> minmax_gray(std::span<const double> v, double& lo, double& hi) {
    lo = *std::min_element(v.begin(), v.end());
    hi = *std::max_element(v.begin(), v.end());
    std::vector<std::uint8_t> out(v.size(), 0);
    if (hi > lo) {
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = to_byte((v[i] - lo) / (hi - lo));
    }
    return out;
}

inline std::string activation_file_name(std::size_t image, std::size_t channel) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "img%02zu_ch%zu.pgm", image, channel);
    return buf;
}

/// Writes `img<i>_ch<c>.pgm` for the first 8 channels of conv layer `layer`
/// for every image, plus `layout.txt` (grid layout and per-map scaling).
/// Directories produced from two checkpoints with the same inputs hold the
/// same file names, so they can be placed side by side; `activation_montage`
/// builds that combined panel.
inline std::vector<std::filesystem::path> visualize_activations(Network& net, const Normalization& norm,
                                                                std::size_t layer, const std::vector<Image>& images,
                                                                const std::filesystem::path& out_dir) {
    if (images.empty()) throw ConfigError("viz-activations needs at least one input image");
    const std::size_t count = net.conv_units().size();
    if (layer >= count) {
        throw ConfigError("layer index " + std::to_string(layer) + " out of range (model has " +
                          std::to_string(count) + " conv layers)");
    }
    if (conv_of(*net.conv_units()[layer]).out_channels() < kActivationChannels) {
        throw ConfigError("layer " + std::to_string(layer) + " has fewer than 8 channels");
    }
    ensure_directory(out_dir);
    std::vector<std::filesystem::path> files;
    std::ostringstream layout;
    layout << "layer " << layer << (is_frequency_filtered(*net.conv_units()[layer]) ? " (frequency-filtered)" : "")
           << "\nmethod " << to_string(net.config.method) << "\ngrid rows=images cols=channels\nimages "
           << images.size() << "\nchannels " << kActivationChannels << '\n';
    for (std::size_t i = 0; i < images.size(); ++i) {
        const Tensor act = conv_activation(net, images[i], norm, layer);
        const std::size_t h = act.dim(1), w = act.dim(2);
        for (std::size_t c = 0; c < kActivationChannels; ++c) {
            double lo = 0.0, hi = 0.0;
            const auto gray = minmax_gray(act.data().subspan(c * h * w, h * w), lo, hi);
            files.push_back(out_dir / activation_file_name(i, c));
            write_plain_pgm(files.back(), h, w, gray);
            char buf[160];
            std::snprintf(buf, sizeof(buf), "%s row=%zu col=%zu min=%.17g max=%.17g\n",
                          activation_file_name(i, c).c_str(), i, c, lo, hi);
            layout << buf;
        }
    }
    detail::write_file(out_dir / "layout.txt", layout.str());
    return files;
}

/// Combines activation directories (e.g. baseline and frequency-regularized
/// models on the same inputs) into one graymap: for each image a row per
/// directory, 8 channel tiles per row, 1-pixel white separators.
inline void activation_montage(const std::vector<std::filesystem::path>& dirs, std::size_t images,
                               const std::filesystem::path& out) {
    if (dirs.empty() || images == 0) throw ConfigError("montage needs directories and images");
    const Image first = read_pnm(dirs[0] / activation_file_name(0, 0));
    const std::size_t th = first.height, tw = first.width;
    const std::size_t rows = images * dirs.size();
    const std::size_t H = rows * (th + 1) - 1, W = kActivationChannels * (tw + 1) - 1;
    std::vector<std::uint8_t> canvas(H * W, 255);
    for (std::size_t i = 0; i < images; ++i) {
        for (std::size_t d = 0; d < dirs.size(); ++d) {
            const std::size_t row = i * dirs.size() + d;
            for (std::size_t c = 0; c < kActivationChannels; ++c) {
                const Image tile = read_pnm(dirs[d] / activation_file_name(i, c));
                if (tile.height != th || tile.width != tw) throw FormatError("montage tiles differ in size");
                for (std::size_t r = 0; r < th; ++r) {
                    for (std::size_t x = 0; x < tw; ++x) {
                        canvas[(row * (th + 1) + r) * W + c * (tw + 1) + x] = to_byte(tile.at(0, r, x));
                    }
                }
            }
        }
    }
    write_plain_pgm(out, H, W, canvas);
}

}  // namespace frqreg
