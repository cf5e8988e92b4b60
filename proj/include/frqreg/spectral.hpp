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

// 2D Fourier analysis and Gaussian low-pass reconstruction.
//
// Conventions:
//  * forward transform is unnormalized, inverse carries 1/(H*W);
//  * spectra are stored DC-centered: frequency (0,0) lives at (H/2, W/2);
//  * mask coordinates are normalized so the full spectrum spans [-0.5, 0.5),
//    which makes sigma independent of the feature-map resolution.
//
// The mask is the isotropic Gaussian exp(-(du^2 + dv^2) / (2 sigma^2)).

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "frqreg/error.hpp"

namespace frqreg::spectral {

using Complex = std::complex<double>;

/// Row-major real plane.
struct Image2D {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> values;

    Image2D() = default;
    Image2D(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), values(h * w, fill) {}
    Image2D(std::size_t h, std::size_t w, std::vector<double> v) : height(h), width(w), values(std::move(v)) {
        if (values.size() != h * w) throw DimensionError("Image2D value count does not match " + std::to_string(h) + "x" + std::to_string(w));
    }

    double& operator()(std::size_t r, std::size_t c) { return values[r * width + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values[r * width + c]; }
};

/// DC-centered complex spectrum.
struct Spectrum {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<Complex> values;

    Complex& operator()(std::size_t r, std::size_t c) { return values[r * width + c]; }
    const Complex& operator()(std::size_t r, std::size_t c) const { return values[r * width + c]; }
};

struct GaussianMaskSpec {
    double center_u = 0.0;  // normalized, 0 = spectrum center
    double center_v = 0.0;
    double sigma = 0.1;     // normalized frequency units, spectrum width = 1

    /// sigma at or above this value means "no filtering".
    static constexpr double kAllPassSigma = 10.0;
    bool all_pass() const { return sigma >= kAllPassSigma; }
};

constexpr bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

constexpr std::size_t next_power_of_two(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

namespace detail {

inline void require_pow2(std::size_t h, std::size_t w, const char* op) {
    if (!is_power_of_two(h) || !is_power_of_two(w)) {
        throw DimensionError(std::string(op) + ": dimensions " + std::to_string(h) + "x" + std::to_string(w) +
                             " are not powers of two");
    }
}

/// In-place iterative radix-2 Cooley-Tukey over a strided sequence.
/// sign = -1 for the forward transform, +1 for the inverse (unscaled).
inline void fft1d(Complex* data, std::size_t n, std::size_t stride, int sign, std::vector<Complex>& scratch) {
    if (n == 1) return;
    scratch.resize(n);
    for (std::size_t i = 0; i < n; ++i) scratch[i] = data[i * stride];

    // bit reversal
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(scratch[i], scratch[j]);
    }

    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2;
        for (std::size_t k = 0; k < half; ++k) {
            // Twiddles straight from cos/sin keep the error at O(eps log n).
            const double angle = sign * 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(len);
            const Complex w = k == 0 ? Complex(1.0, 0.0) : Complex(std::cos(angle), std::sin(angle));
            for (std::size_t start = 0; start < n; start += len) {
                const Complex a = scratch[start + k];
                const Complex z = scratch[start + k + half];
                const Complex b = k == 0 ? z
                                         : Complex(w.real() * z.real() - w.imag() * z.imag(),
                                                   w.real() * z.imag() + w.imag() * z.real());
                scratch[start + k] = a + b;
                scratch[start + k + half] = a - b;
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) data[i * stride] = scratch[i];
}

inline void fft2_inplace(std::vector<Complex>& v, std::size_t h, std::size_t w, int sign) {
    std::vector<Complex> scratch;
    for (std::size_t r = 0; r < h; ++r) fft1d(v.data() + r * w, w, 1, sign, scratch);
    for (std::size_t c = 0; c < w; ++c) fft1d(v.data() + c, h, w, sign, scratch);
}

/// Moves DC from (0,0) to (h/2, w/2). For even sizes shift and unshift coincide.
inline std::vector<Complex> fftshift(const std::vector<Complex>& v, std::size_t h, std::size_t w) {
    std::vector<Complex> out(v.size());
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) out[((r + h / 2) % h) * w + (c + w / 2) % w] = v[r * w + c];
    }
    return out;
}

inline std::vector<Complex> ifftshift(const std::vector<Complex>& v, std::size_t h, std::size_t w) {
    std::vector<Complex> out(v.size());
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) out[r * w + c] = v[((r + h / 2) % h) * w + (c + w / 2) % w];
    }
    return out;
}

}  // namespace detail

/// Unnormalized forward 2D DFT, returned DC-centered.
inline Spectrum fft2(const Image2D& image) {
    detail::require_pow2(image.height, image.width, "fft2");
    std::vector<Complex> v(image.values.begin(), image.values.end());
    detail::fft2_inplace(v, image.height, image.width, -1);
    return Spectrum{image.height, image.width, detail::fftshift(v, image.height, image.width)};
}

/// Inverse of fft2. Throws NumericError if the result carries an imaginary
/// part larger than 1e-9 * (1 + max|re|), which means the spectrum was not
/// conjugate-symmetric.
inline Image2D ifft2(const Spectrum& spectrum) {
    const std::size_t h = spectrum.height, w = spectrum.width;
    detail::require_pow2(h, w, "ifft2");
    if (spectrum.values.size() != h * w) throw DimensionError("ifft2: spectrum value count mismatch");
    std::vector<Complex> v = detail::ifftshift(spectrum.values, h, w);
    detail::fft2_inplace(v, h, w, +1);
    // h*w is a power of two, so this scaling is exact.
    const double inv = 1.0 / static_cast<double>(h * w);
    Image2D out(h, w);
    double max_re = 0.0, max_im = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out.values[i] = v[i].real() * inv;
        max_re = std::max(max_re, std::abs(out.values[i]));
        max_im = std::max(max_im, std::abs(v[i].imag() * inv));
    }
    if (max_im > 1e-9 * (1.0 + max_re)) {
        throw NumericError("ifft2: imaginary residue " + std::to_string(max_im) +
                           " exceeds tolerance; spectrum is not conjugate-symmetric");
    }
    return out;
}

/// Normalized coordinate of centered bin index i on an axis of length n.
inline double normalized_frequency(std::size_t i, std::size_t n) {
    return (static_cast<double>(i) - static_cast<double>(n / 2)) / static_cast<double>(n);
}

/// DC-centered Gaussian low-pass mask of shape h x w.
inline Image2D gaussian_mask(const GaussianMaskSpec& spec, std::size_t h, std::size_t w) {
    if (!(spec.sigma > 0.0) || !std::isfinite(spec.sigma)) {
        throw ParameterError("gaussian_mask: sigma must be positive, got " + std::to_string(spec.sigma));
    }
    Image2D mask(h, w, 1.0);
    if (spec.all_pass()) return mask;
    const double denom = 2.0 * spec.sigma * spec.sigma;
    for (std::size_t r = 0; r < h; ++r) {
        const double du = normalized_frequency(r, h) - spec.center_u;
        for (std::size_t c = 0; c < w; ++c) {
            const double dv = normalized_frequency(c, w) - spec.center_v;
            mask(r, c) = std::exp(-(du * du + dv * dv) / denom);
        }
    }
    return mask;
}

inline Spectrum apply_mask(const Spectrum& spectrum, const Image2D& mask) {
    if (mask.height != spectrum.height || mask.width != spectrum.width) {
        throw DimensionError("apply_mask: mask and spectrum sizes differ");
    }
    Spectrum out = spectrum;
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] *= mask.values[i];
    return out;
}

/// ifft2(fft2(image) * mask) on a power-of-two plane.
inline Image2D lowpass_reconstruct(const Image2D& image, const GaussianMaskSpec& spec) {
    detail::require_pow2(image.height, image.width, "lowpass_reconstruct");
    const Image2D mask = gaussian_mask(spec, image.height, image.width);
    if (spec.all_pass()) return image;
    return ifft2(apply_mask(fft2(image), mask));
}

/// Low-pass reconstruction for arbitrary plane sizes: zero-pad to the next
/// power of two (image placed at the center), filter, then crop the center.
inline Image2D lowpass_reconstruct_padded(const Image2D& image, const GaussianMaskSpec& spec) {
    const std::size_t ph = next_power_of_two(image.height);
    const std::size_t pw = next_power_of_two(image.width);
    if (ph == image.height && pw == image.width) return lowpass_reconstruct(image, spec);
    const std::size_t top = (ph - image.height) / 2;
    const std::size_t left = (pw - image.width) / 2;
    Image2D padded(ph, pw, 0.0);
    for (std::size_t r = 0; r < image.height; ++r) {
        for (std::size_t c = 0; c < image.width; ++c) padded(r + top, c + left) = image(r, c);
    }
    const Image2D filtered = lowpass_reconstruct(padded, spec);
    Image2D out(image.height, image.width);
    for (std::size_t r = 0; r < image.height; ++r) {
        for (std::size_t c = 0; c < image.width; ++c) out(r, c) = filtered(r + top, c + left);
    }
    return out;
}

inline double energy(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

inline double spectral_energy(const Spectrum& s) {
    double e = 0.0;
    for (const Complex& c : s.values) e += std::norm(c);
    return e;
}

/// log(1 + |S|) per bin, DC-centered.
inline Image2D log_magnitude(const Spectrum& s) {
    Image2D out(s.height, s.width);
    for (std::size_t i = 0; i < s.values.size(); ++i) out.values[i] = std::log1p(std::abs(s.values[i]));
    return out;
}

}  // namespace frqreg::spectral
