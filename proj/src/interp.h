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

#include <algorithm>
#include <cmath>

#include "respmodel/grid.h"

namespace respmodel::detail {

struct AxisWeight {
    int lo;
    double frac;
};

// Clamp-to-edge; at the last node lo = n-2 and frac = 1 so node values stay exact.
inline AxisWeight axis_weight(double c, int n) {
    c = std::clamp(c, 0.0, static_cast<double>(n - 1));
    int lo = std::min(static_cast<int>(std::floor(c)), n - 2);
    return {lo, c - lo};
}

/// Trilinear sample at continuous voxel coordinates c of an x-fastest array.
template <class T>
T sample_at_index(const GridMeta &m, const T *data, const Vec3 &c) {
    const AxisWeight wx = axis_weight(c.x, m.dims[0]);
    const AxisWeight wy = axis_weight(c.y, m.dims[1]);
    const AxisWeight wz = axis_weight(c.z, m.dims[2]);
    const std::size_t sx = 1;
    const std::size_t sy = static_cast<std::size_t>(m.dims[0]);
    const std::size_t sz = sy * static_cast<std::size_t>(m.dims[1]);
    const T *p = data + m.index(wx.lo, wy.lo, wz.lo);

    auto lerp = [](const T &a, const T &b, double f) -> T {
        if (f == 0.0) {
            return a;
        }
        if (f == 1.0) {
            return b;
        }
        return a * (1.0 - f) + b * f;
    };
    const T c00 = lerp(p[0], p[sx], wx.frac);
    const T c10 = lerp(p[sy], p[sy + sx], wx.frac);
    const T c01 = lerp(p[sz], p[sz + sx], wx.frac);
    const T c11 = lerp(p[sz + sy], p[sz + sy + sx], wx.frac);
    const T c0 = lerp(c00, c10, wy.frac);
    const T c1 = lerp(c01, c11, wy.frac);
    return lerp(c0, c1, wz.frac);
}

} // namespace respmodel::detail
