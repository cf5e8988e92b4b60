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

// Planar [C,H,W] images in [0,1] and the netpbm / raw byte formats used by
// the command line tools.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "frqreg/error.hpp"

namespace frqreg {

struct Image {
    std::size_t channels = 3;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> data;  // planar: channel, row, column

    Image() = default;
    Image(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
        : channels(c), height(h), width(w), data(c * h * w, fill) {}

    std::size_t plane_size() const { return height * width; }
    double& at(std::size_t c, std::size_t r, std::size_t x) { return data[(c * height + r) * width + x]; }
    double at(std::size_t c, std::size_t r, std::size_t x) const { return data[(c * height + r) * width + x]; }

    bool operator==(const Image&) const = default;
};

inline std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

/// ITU-R 601 luma of a 3-channel image (single channel passes through).
inline std::vector<double> luma(const Image& img) {
    std::vector<double> out(img.plane_size());
    if (img.channels == 1) return std::vector<double>(img.data.begin(), img.data.end());
    const std::size_t n = img.plane_size();
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = 0.299 * img.data[i] + 0.587 * img.data[n + i] + 0.114 * img.data[2 * n + i];
    }
    return out;
}

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace detail

/// Plain (ASCII, P2) graymap with max value 255. `values` already in [0,255].
inline std::string encode_plain_pgm(std::size_t height, std::size_t width, const std::vector<std::uint8_t>& values) {
    std::ostringstream os;
    os << "P2\n" << width << ' ' << height << "\n255\n";
    for (std::size_t r = 0; r < height; ++r) {
        for (std::size_t c = 0; c < width; ++c) {
            os << static_cast<int>(values[r * width + c]) << (c + 1 == width ? '\n' : ' ');
        }
    }
    return os.str();
}

inline void write_plain_pgm(const std::filesystem::path& path, std::size_t height, std::size_t width,
                            const std::vector<std::uint8_t>& values) {
    detail::write_file(path, encode_plain_pgm(height, width, values));
}

/// Reads P2/P3/P5/P6 netpbm files with maxval <= 255.
inline Image read_pnm(const std::filesystem::path& path) {
    const std::string bytes = detail::read_file(path);
    std::size_t pos = 0;
    auto token = [&]() -> std::string {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
        const std::size_t start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos])) && bytes[pos] != '#') ++pos;
        if (start == pos) throw FormatError("truncated netpbm header in " + path.string());
        return bytes.substr(start, pos - start);
    };
    const std::string magic = token();
    if (magic != "P2" && magic != "P3" && magic != "P5" && magic != "P6") {
        throw FormatError(path.string() + " is not a P2/P3/P5/P6 netpbm file");
    }
    std::size_t width = 0, height = 0, maxval = 0;
    try {
        width = std::stoul(token());
        height = std::stoul(token());
        maxval = std::stoul(token());
    } catch (const std::logic_error&) {
        throw FormatError("bad netpbm header in " + path.string());
    }
    if (width == 0 || height == 0 || maxval == 0 || maxval > 255) {
        throw FormatError("unsupported netpbm geometry or maxval in " + path.string());
    }
    const std::size_t channels = (magic == "P3" || magic == "P6") ? 3 : 1;
    Image img(channels, height, width);
    const std::size_t count = channels * height * width;
    std::vector<std::size_t> raw(count);
    if (magic == "P5" || magic == "P6") {
        ++pos;  // single whitespace after maxval
        if (bytes.size() < pos + count) throw FormatError("truncated netpbm raster in " + path.string());
        for (std::size_t i = 0; i < count; ++i) raw[i] = static_cast<unsigned char>(bytes[pos + i]);
    } else {
        for (std::size_t i = 0; i < count; ++i) raw[i] = std::stoul(token());
    }
    // interleaved -> planar
    for (std::size_t r = 0; r < height; ++r) {
        for (std::size_t c = 0; c < width; ++c) {
            for (std::size_t ch = 0; ch < channels; ++ch) {
                img.at(ch, r, c) = static_cast<double>(raw[(r * width + c) * channels + ch]) / static_cast<double>(maxval);
            }
        }
    }
    return img;
}

/// Binary P6 (3 channels) or P5 (1 channel).
inline void write_pnm(const std::filesystem::path& path, const Image& img) {
    if (img.channels != 1 && img.channels != 3) throw FormatError("netpbm output needs 1 or 3 channels");
    std::ostringstream os;
    os << (img.channels == 3 ? "P6" : "P5") << '\n' << img.width << ' ' << img.height << "\n255\n";
    std::string body(img.data.size(), '\0');
    std::size_t k = 0;
    for (std::size_t r = 0; r < img.height; ++r) {
        for (std::size_t c = 0; c < img.width; ++c) {
            for (std::size_t ch = 0; ch < img.channels; ++ch) body[k++] = static_cast<char>(to_byte(img.at(ch, r, c)));
        }
    }
    detail::write_file(path, os.str() + body);
}

/// Raw CIFAR-style planar bytes: 3072 bytes (3x32x32) or a 3073-byte record
/// with a leading label byte.
inline Image read_raw_cifar_image(const std::filesystem::path& path) {
    const std::string bytes = detail::read_file(path);
    std::size_t offset = 0;
    if (bytes.size() == 3073) {
        offset = 1;
    } else if (bytes.size() != 3072) {
        throw FormatError(path.string() + ": raw images must be 3072 or 3073 bytes, got " +
                          std::to_string(bytes.size()));
    }
    Image img(3, 32, 32);
    for (std::size_t i = 0; i < 3072; ++i) img.data[i] = static_cast<unsigned char>(bytes[offset + i]) / 255.0;
    return img;
}

inline void write_raw_cifar_image(const std::filesystem::path& path, const Image& img) {
    if (img.channels != 3 || img.height != 32 || img.width != 32) throw FormatError("raw output needs 3x32x32");
    std::string body(3072, '\0');
    for (std::size_t i = 0; i < 3072; ++i) body[i] = static_cast<char>(to_byte(img.data[i]));
    detail::write_file(path, body);
}

inline bool has_raw_extension(const std::filesystem::path& path) {
    const std::string ext = path.extension().string();
    return ext == ".raw" || ext == ".bin";
}

/// Loads an image by extension: .raw/.bin as CIFAR planar bytes, anything
/// else as netpbm. Grayscale inputs are replicated to 3 channels.
inline Image load_image(const std::filesystem::path& path) {
    Image img = has_raw_extension(path) ? read_raw_cifar_image(path) : read_pnm(path);
    if (img.channels == 1) {
        Image rgb(3, img.height, img.width);
        for (std::size_t ch = 0; ch < 3; ++ch) std::copy(img.data.begin(), img.data.end(), rgb.data.begin() + ch * img.plane_size());
        return rgb;
    }
    return img;
}

inline void save_image(const std::filesystem::path& path, const Image& img) {
    if (has_raw_extension(path)) {
        write_raw_cifar_image(path, img);
    } else {
        write_pnm(path, img);
    }
}

}  // namespace frqreg
