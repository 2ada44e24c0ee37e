/*
 * respmodel : population-based 4D respiratory motion models
 *
 * Copyright 2026 The respmodel authors
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
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

namespace respmodel {

/// Spirometry surrogate: volume v [ml] and its time derivative v' per sample.
struct SurrogateSignal {
    std::vector<double> t;       // strictly increasing sample times
    std::vector<double> v;       // [ml]
    std::vector<double> v_prime; // [ml per time unit]

    std::size_t size() const { return t.size(); }
};

inline constexpr double kMinVolumeMl = 0.0;
inline constexpr double kMaxVolumeMl = 1200.0;

/// Checks lengths, monotone time and finiteness, and that v lies in [lo, hi].
void validate(const SurrogateSignal &s, double lo = kMinVolumeMl, double hi = kMaxVolumeMl);

/// Attaches v' by central differences (one-sided at both ends). Throws TooShort below 2 samples.
SurrogateSignal derive(std::span<const double> t, std::span<const double> v);

/// Phase-indexed signal: t = 0, 1, ..., n-1.
SurrogateSignal phase_signal(std::span<const double> v);

/// Linear interpolation of v at time `at`, clamped to the end samples.
double interpolate_volume(const SurrogateSignal &s, double at);

/// Pointwise mean after resampling every signal onto the first one's time base.
SurrogateSignal average_signals(std::span<const SurrogateSignal> signals);

struct SignalSimConfig {
    std::pair<double, double> amp_range{0.0, 1000.0}; // [ml]
    double period_mean = 4.0;                         // [s]
    double period_jitter = 0.1;                       // relative std of the cycle period
    double amp_jitter = 0.15;                         // relative std of the cycle amplitude
    std::uint64_t seed = 0;
    double duration = 60.0; // [s]
    double dt = 0.1;        // [s]

    /// Throws InvalidConfig.
    void validate() const;
};

/// Breath cycles v(t) = lo + A_k sin^2(pi (t - t_k) / T_k) with per-cycle jittered A_k, T_k,
/// clamped to amp_range. Bit-reproducible for a given seed.
SurrogateSignal simulate(const SignalSimConfig &cfg);

/// CSV with header "t_s,v_ml"; v' is recomputed on load.
SurrogateSignal read_signal_csv(const std::filesystem::path &path);
void write_signal_csv(const std::filesystem::path &path, const SurrogateSignal &s);

} // namespace respmodel
