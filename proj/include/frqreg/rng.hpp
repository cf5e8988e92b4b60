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

// Counter-based random numbers (Philox4x32-10, Salmon et al., SC 2011).
//
// Every draw is a pure function of (key, counter), so results do not depend on
// iteration order or thread scheduling. Callers build the counter from the
// structured indices of what they are randomizing (pixel index, sample index,
// epoch, ...).

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace frqreg {

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

namespace detail {

constexpr std::uint32_t kPhiloxW32A = 0x9E3779B9;
constexpr std::uint32_t kPhiloxW32B = 0xBB67AE85;
constexpr std::uint32_t kPhiloxM4x32A = 0xD2511F53;
constexpr std::uint32_t kPhiloxM4x32B = 0xCD9E8D57;

constexpr void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& lo, std::uint32_t& hi) {
    const std::uint64_t product = static_cast<std::uint64_t>(a) * b;
    lo = static_cast<std::uint32_t>(product);
    hi = static_cast<std::uint32_t>(product >> 32);
}

constexpr PhiloxCounter philox_round(const PhiloxCounter& ctr, const PhiloxKey& key) {
    std::uint32_t lo0 = 0, hi0 = 0, lo1 = 0, hi1 = 0;
    mulhilo(kPhiloxM4x32A, ctr[0], lo0, hi0);
    mulhilo(kPhiloxM4x32B, ctr[2], lo1, hi1);
    return {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
}

}  // namespace detail

/// Philox4x32 with 10 rounds.
constexpr PhiloxCounter philox4x32(PhiloxCounter ctr, PhiloxKey key) {
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += detail::kPhiloxW32A;
            key[1] += detail::kPhiloxW32B;
        }
        ctr = detail::philox_round(ctr, key);
    }
    return ctr;
}

/// FNV-1a, used to turn stream names into stable 64-bit tags.
constexpr std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : text) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// A keyed family of random streams. A stream is addressed by a 64-bit tag
/// (what is being randomized) and a 64-bit index (which element); each
/// (tag, index) pair yields four independent 32-bit words.
class CounterRng {
public:
    constexpr CounterRng(std::uint64_t seed, std::uint64_t domain)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          domain_(domain) {}

    constexpr std::uint64_t seed() const {
        return static_cast<std::uint64_t>(key_[0]) | (static_cast<std::uint64_t>(key_[1]) << 32);
    }
    constexpr std::uint64_t domain() const { return domain_; }

    /// Derive an independent family by mixing another tag into the domain.
    constexpr CounterRng fork(std::uint64_t tag) const {
        const PhiloxCounter mixed = philox4x32(
            {static_cast<std::uint32_t>(domain_), static_cast<std::uint32_t>(domain_ >> 32),
             static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32)},
            key_);
        CounterRng out = *this;
        out.domain_ = static_cast<std::uint64_t>(mixed[0]) | (static_cast<std::uint64_t>(mixed[1]) << 32);
        return out;
    }

    constexpr PhiloxCounter block(std::uint64_t index) const {
        return philox4x32({static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                           static_cast<std::uint32_t>(domain_), static_cast<std::uint32_t>(domain_ >> 32)},
                          key_);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform(std::uint64_t index) const {
        const auto b = block(index);
        return to_unit(b[0], b[1]);
    }

    /// Uniform double in (0, 1], never zero (safe for logarithms).
    double uniform_open0(std::uint64_t index) const { return 1.0 - uniform(index); }

    /// Standard normal via Box-Muller on the two 53-bit halves of one block.
    double normal(std::uint64_t index) const {
        const auto b = block(index);
        const double u1 = 1.0 - to_unit(b[0], b[1]);
        const double u2 = to_unit(b[2], b[3]);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Uniform integer in [0, bound) by 64-bit multiply-shift.
    std::uint64_t below(std::uint64_t index, std::uint64_t bound) const {
        const auto b = block(index);
        const std::uint64_t r = static_cast<std::uint64_t>(b[0]) | (static_cast<std::uint64_t>(b[1]) << 32);
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>(r) * bound) >> 64);
    }

    /// Poisson draw by CDF inversion of a single uniform. Suitable for the
    /// moderate rates used by shot noise (rate well below 700).
    std::uint64_t poisson(std::uint64_t index, double rate) const {
        if (rate <= 0.0) return 0;
        const double u = uniform(index);
        double p = std::exp(-rate);
        double cdf = p;
        std::uint64_t k = 0;
        while (u >= cdf && k < 100000) {
            ++k;
            p *= rate / static_cast<double>(k);
            cdf += p;
            if (p == 0.0 && static_cast<double>(k) > rate) break;
        }
        return k;
    }

private:
    static double to_unit(std::uint32_t lo, std::uint32_t hi) {
        const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32 | lo) >> 11;
        return static_cast<double>(bits) * 0x1.0p-53;
    }

    PhiloxKey key_;
    std::uint64_t domain_;
};

}  // namespace frqreg
