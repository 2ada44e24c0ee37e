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

#include "respmodel/surrogate.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "respmodel/errors.h"

namespace respmodel {

void validate(const SurrogateSignal &s, double lo, double hi) {
    if (s.t.size() != s.v.size() || s.t.size() != s.v_prime.size()) {
        throw ShapeMismatch("surrogate signal: t, v and v' lengths differ");
    }
    if (s.t.size() < 2) {
        throw TooShort("surrogate signal needs at least 2 samples");
    }
    for (std::size_t n = 0; n < s.t.size(); ++n) {
        if (!std::isfinite(s.t[n]) || !std::isfinite(s.v[n]) || !std::isfinite(s.v_prime[n])) {
            throw ValidationError("surrogate signal contains non-finite samples");
        }
        if (n > 0 && !(s.t[n] > s.t[n - 1])) {
            throw ValidationError("surrogate signal times must be strictly increasing");
        }
        if (s.v[n] < lo || s.v[n] > hi) {
            std::ostringstream os;
            os << "surrogate volume " << s.v[n] << " ml outside [" << lo << ", " << hi << "]";
            throw ValidationError(os.str());
        }
    }
}

SurrogateSignal derive(std::span<const double> t, std::span<const double> v) {
    if (t.size() != v.size()) {
        throw ShapeMismatch("derive: t and v lengths differ");
    }
    const std::size_t n = t.size();
    if (n < 2) {
        throw TooShort("derive: need at least 2 samples");
    }
    SurrogateSignal s;
    s.t.assign(t.begin(), t.end());
    s.v.assign(v.begin(), v.end());
    s.v_prime.resize(n);
    s.v_prime[0] = (v[1] - v[0]) / (t[1] - t[0]);
    s.v_prime[n - 1] = (v[n - 1] - v[n - 2]) / (t[n - 1] - t[n - 2]);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        s.v_prime[i] = (v[i + 1] - v[i - 1]) / (t[i + 1] - t[i - 1]);
    }
    return s;
}

SurrogateSignal phase_signal(std::span<const double> v) {
    std::vector<double> t(v.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = static_cast<double>(i);
    }
    return derive(t, v);
}

double interpolate_volume(const SurrogateSignal &s, double at) {
    if (at <= s.t.front()) {
        return s.v.front();
    }
    if (at >= s.t.back()) {
        return s.v.back();
    }
    const auto hi = static_cast<std::size_t>(std::upper_bound(s.t.begin(), s.t.end(), at) - s.t.begin());
    const std::size_t lo = hi - 1;
    const double f = (at - s.t[lo]) / (s.t[hi] - s.t[lo]);
    return s.v[lo] + f * (s.v[hi] - s.v[lo]);
}

SurrogateSignal average_signals(std::span<const SurrogateSignal> signals) {
    if (signals.empty()) {
        throw EmptyList("average_signals: no signals");
    }
    const SurrogateSignal &base = signals.front();
    std::vector<double> mean(base.size(), 0.0);
    for (const SurrogateSignal &s : signals) {
        for (std::size_t n = 0; n < base.size(); ++n) {
            mean[n] += interpolate_volume(s, base.t[n]);
        }
    }
    for (double &m : mean) {
        m /= static_cast<double>(signals.size());
    }
    return derive(base.t, mean);
}

void SignalSimConfig::validate() const {
    const auto [lo, hi] = amp_range;
    if (!(lo >= kMinVolumeMl && hi <= kMaxVolumeMl && lo < hi)) {
        throw InvalidConfig("amp_range must satisfy 0 <= min < max <= 1200 ml");
    }
    if (!(period_mean > 0.0) || !(dt > 0.0) || !(duration >= dt)) {
        throw InvalidConfig("period_mean and dt must be > 0 and duration >= dt");
    }
    if (!(period_jitter >= 0.0) || !(amp_jitter >= 0.0)) {
        throw InvalidConfig("jitters must be non-negative");
    }
}

SurrogateSignal simulate(const SignalSimConfig &cfg) {
    cfg.validate();
    const auto [lo, hi] = cfg.amp_range;
    const auto count = static_cast<std::size_t>(std::floor(cfg.duration / cfg.dt + 1e-9)) + 1;

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto draw_cycle = [&](double &amp, double &period) {
        // both draws happen every cycle so the stream does not depend on which jitter is zero
        const double za = normal(rng);
        const double zp = normal(rng);
        amp = (hi - lo) * std::max(0.0, 1.0 + cfg.amp_jitter * za);
        period = cfg.period_mean * std::max(0.2, 1.0 + cfg.period_jitter * zp);
    };

    std::vector<double> t(count), v(count);
    double cycle_start = 0.0;
    double amp = 0.0;
    double period = 0.0;
    draw_cycle(amp, period);
    for (std::size_t n = 0; n < count; ++n) {
        t[n] = static_cast<double>(n) * cfg.dt;
        while (t[n] >= cycle_start + period) {
            cycle_start += period;
            draw_cycle(amp, period);
        }
        const double s = std::sin(std::numbers::pi * (t[n] - cycle_start) / period);
        v[n] = std::clamp(lo + amp * s * s, lo, hi);
    }
    return derive(t, v);
}

SurrogateSignal read_signal_csv(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open signal file: " + path.string());
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw IoError("empty signal file: " + path.string());
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    if (line != "t_s,v_ml") {
        throw IoError(path.string() + ": expected header 't_s,v_ml'");
    }
    std::vector<double> t, v;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") {
            continue;
        }
        std::istringstream ls(line);
        double ts = 0.0, vm = 0.0;
        char comma = 0;
        if (!(ls >> ts >> comma >> vm) || comma != ',') {
            throw IoError(path.string() + ": malformed row " + std::to_string(row));
        }
        t.push_back(ts);
        v.push_back(vm);
    }
    SurrogateSignal s = derive(t, v);
    validate(s);
    return s;
}

void write_signal_csv(const std::filesystem::path &path, const SurrogateSignal &s) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot write signal file: " + path.string());
    }
    out << "t_s,v_ml\n" << std::setprecision(17);
    for (std::size_t n = 0; n < s.size(); ++n) {
        out << s.t[n] << "," << s.v[n] << "\n";
    }
}

} // namespace respmodel
