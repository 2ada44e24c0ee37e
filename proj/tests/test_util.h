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

#include <cmath>
#include <numbers>
#include <random>

#include "respmodel/grid.h"

namespace testutil {

using namespace respmodel;

inline GridMeta cube(int n, double spacing = 1.0, Vec3 origin = {}) {
    GridMeta m;
    m.dims = {n, n, n};
    m.spacing = {spacing, spacing, spacing};
    m.origin = origin;
    return m;
}

template <class Fn>
ScalarVolume volume_from(const GridMeta &meta, Fn &&fn) {
    ScalarVolume v(meta);
    for_each_voxel(meta, [&](int i, int j, int k, std::size_t n) { v.values[n] = fn(meta.world(i, j, k)); });
    return v;
}

template <class Fn>
DisplacementField field_from(const GridMeta &meta, Fn &&fn) {
    DisplacementField f(meta);
    for_each_voxel(meta, [&](int i, int j, int k, std::size_t n) { f.u[n] = fn(meta.world(i, j, k)); });
    return f;
}

template <class Fn>
MaskVolume mask_from(const GridMeta &meta, Fn &&fn) {
    MaskVolume m(meta);
    for_each_voxel(meta, [&](int i, int j, int k, std::size_t n) { m.labels[n] = fn(meta.world(i, j, k)) ? 1 : 0; });
    return m;
}

/// Smooth sinusoidal field of the given amplitude [mm] over the grid extent.
inline DisplacementField sine_field(const GridMeta &meta, double amp, double phase = 0.0) {
    const Vec3 e = meta.extent();
    const double pi = std::numbers::pi;
    return field_from(meta, [&](const Vec3 &p) {
        return Vec3{amp * std::sin(2 * pi * p.y / e.y + phase), amp * std::sin(2 * pi * p.z / e.z + 0.5 * phase),
                    amp * std::cos(2 * pi * p.x / e.x - phase)};
    });
}

inline DisplacementField random_field(const GridMeta &meta, double amp, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(-amp, amp);
    DisplacementField f(meta);
    for (Vec3 &u : f.u) {
        u = {d(rng), d(rng), d(rng)};
    }
    return f;
}

/// Soft ball, 1 inside, 0 outside, sigmoid edge of `width` mm.
inline ScalarVolume soft_ball(const GridMeta &meta, const Vec3 &c, double r, double width) {
    return volume_from(meta, [&](const Vec3 &p) { return 1.0 / (1.0 + std::exp((norm(p - c) - r) / width)); });
}

} // namespace testutil
