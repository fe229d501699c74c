// Copyright 2026 The contmeas Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Counter-based Wiener increments.
//
// Every variate is a pure function of (master_seed, stream_id, counter):
// Philox4x32-10 maps the 128-bit counter (counter, stream_id) under the
// 64-bit key master_seed to four 32-bit words, which a Box–Muller transform
// (cosine branch only) turns into one standard normal. Trajectory k draws
// only from stream k, so results do not depend on scheduling.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

#include "contmeas/errors.hpp"

namespace contmeas {

inline constexpr std::string_view kRngAlgorithm = "philox4x32-10/box-muller-cos";

using Philox4x32Counter = std::array<std::uint32_t, 4>;
using Philox4x32Key = std::array<std::uint32_t, 2>;

constexpr Philox4x32Counter philox4x32_10(Philox4x32Counter ctr, Philox4x32Key key) {
    constexpr std::uint32_t kMul0 = 0xD2511F53u;
    constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
        std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
        auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        auto lo0 = static_cast<std::uint32_t>(p0);
        auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        auto lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
}

/// Standard normal variate at position `counter` of stream `stream_id`.
inline double standard_normal_at(std::uint64_t master_seed, std::uint64_t stream_id, std::uint64_t counter) {
    Philox4x32Counter ctr{static_cast<std::uint32_t>(counter), static_cast<std::uint32_t>(counter >> 32),
                          static_cast<std::uint32_t>(stream_id), static_cast<std::uint32_t>(stream_id >> 32)};
    Philox4x32Key key{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32)};
    auto r = philox4x32_10(ctr, key);
    std::uint64_t a = (std::uint64_t{r[0]} << 32) | r[1];
    std::uint64_t b = (std::uint64_t{r[2]} << 32) | r[3];
    constexpr double kInv53 = 1.0 / 9007199254740992.0;  // 2^-53
    double u1 = (static_cast<double>(a >> 11) + 1.0) * kInv53;  // (0, 1]
    double u2 = static_cast<double>(b >> 11) * kInv53;          // [0, 1)
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline void require_positive_dt(double dt) {
    if (!(dt > 0.0) || !std::isfinite(dt)) {
        throw Error(ErrorKind::configuration, "time step must be positive and finite");
    }
}

/// ΔW ~ Normal(0, Δt) at an explicit counter position; does not advance anything.
inline double increment_at(std::uint64_t master_seed, std::uint64_t stream_id, std::uint64_t counter, double dt) {
    require_positive_dt(dt);
    return std::sqrt(dt) * standard_normal_at(master_seed, stream_id, counter);
}

struct NoiseStream {
    std::uint64_t master_seed = 0;
    std::uint64_t stream_id = 0;
    std::uint64_t counter = 0;
};

inline double next_increment(NoiseStream &stream, double dt) {
    double dw = increment_at(stream.master_seed, stream.stream_id, stream.counter, dt);
    ++stream.counter;
    return dw;
}

/// The next n increments of the stream.
inline std::vector<double> increments(NoiseStream &stream, std::size_t n, double dt) {
    require_positive_dt(dt);
    std::vector<double> out(n);
    for (auto &x : out) x = next_increment(stream, dt);
    return out;
}

/// ξ(t_k) for k = 0..n_steps, ξ(0) = 0.
inline std::vector<double> wiener_path(NoiseStream &stream, std::size_t n_steps, double dt) {
    if (n_steps < 1) {
        throw Error(ErrorKind::configuration, "wiener_path requires n_steps >= 1");
    }
    require_positive_dt(dt);
    std::vector<double> path(n_steps + 1, 0.0);
    for (std::size_t k = 1; k <= n_steps; ++k) {
        path[k] = path[k - 1] + next_increment(stream, dt);
    }
    return path;
}

/// Sums consecutive groups of `factor` increments: the same Wiener path seen
/// at a step `factor` times coarser.
inline std::vector<double> coarsen_increments(const std::vector<double> &fine, std::size_t factor) {
    if (factor == 0 || fine.size() % factor != 0) {
        throw Error(ErrorKind::configuration, "coarsening factor must divide the number of increments");
    }
    std::vector<double> out(fine.size() / factor, 0.0);
    for (std::size_t i = 0; i < fine.size(); ++i) out[i / factor] += fine[i];
    return out;
}

}  // namespace contmeas
