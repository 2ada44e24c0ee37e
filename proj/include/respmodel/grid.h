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

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "respmodel/errors.h"

namespace respmodel {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    double operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
    double &operator[](int axis) { return axis == 0 ? x : (axis == 1 ? y : z); }

    Vec3 &operator+=(const Vec3 &o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3 &operator-=(const Vec3 &o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
    Vec3 &operator*=(double s) { x *= s; y *= s; z *= s; return *this; }

    friend Vec3 operator+(Vec3 a, const Vec3 &b) { return a += b; }
    friend Vec3 operator-(Vec3 a, const Vec3 &b) { return a -= b; }
    friend Vec3 operator-(const Vec3 &a) { return {-a.x, -a.y, -a.z}; }
    friend Vec3 operator*(Vec3 a, double s) { return a *= s; }
    friend Vec3 operator*(double s, Vec3 a) { return a *= s; }
    friend bool operator==(const Vec3 &, const Vec3 &) = default;
};

inline double norm(const Vec3 &v) { return std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z); }
inline double max_abs(const Vec3 &v) { return std::max({std::abs(v.x), std::abs(v.y), std::abs(v.z)}); }

using Dims = std::array<int, 3>;

/// Axis-aligned sampling grid. World position of voxel (i,j,k) is origin + (i,j,k)*spacing.
/// Voxels are stored x-fastest.
struct GridMeta {
    Dims dims{2, 2, 2};
    Vec3 spacing{1.0, 1.0, 1.0};
    Vec3 origin{};

    /// Throws InvalidDims on dims < 2 or non-positive spacing.
    void validate() const;

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
               static_cast<std::size_t>(dims[2]);
    }

    std::size_t index(int i, int j, int k) const {
        return (static_cast<std::size_t>(k) * static_cast<std::size_t>(dims[1]) +
                static_cast<std::size_t>(j)) *
                   static_cast<std::size_t>(dims[0]) +
               static_cast<std::size_t>(i);
    }

    Vec3 world(int i, int j, int k) const {
        return {origin.x + i * spacing.x, origin.y + j * spacing.y, origin.z + k * spacing.z};
    }

    /// Continuous voxel coordinates of a world point.
    Vec3 to_index(const Vec3 &p) const {
        return {(p.x - origin.x) / spacing.x, (p.y - origin.y) / spacing.y, (p.z - origin.z) / spacing.z};
    }

    /// Physical extent along each axis, voxel edge to voxel edge.
    Vec3 extent() const { return {dims[0] * spacing.x, dims[1] * spacing.y, dims[2] * spacing.z}; }

    Vec3 center() const {
        return {origin.x + 0.5 * (dims[0] - 1) * spacing.x, origin.y + 0.5 * (dims[1] - 1) * spacing.y,
                origin.z + 0.5 * (dims[2] - 1) * spacing.z};
    }

    /// Same dims, and spacing/origin equal up to floating-point noise.
    bool same_grid(const GridMeta &other) const;

    /// Grid with new_dims covering the same physical extent.
    GridMeta resized(const Dims &new_dims) const;
};

/// Throws GridMismatch naming `what` when the two grids differ.
void require_same_grid(const GridMeta &a, const GridMeta &b, const char *what);

struct ScalarVolume {
    GridMeta meta;
    std::vector<double> values;

    ScalarVolume() = default;
    explicit ScalarVolume(const GridMeta &m, double fill = 0.0) : meta(m), values(m.voxel_count(), fill) {}

    double &at(int i, int j, int k) { return values[meta.index(i, j, k)]; }
    double at(int i, int j, int k) const { return values[meta.index(i, j, k)]; }
};

struct MaskVolume {
    GridMeta meta;
    std::vector<std::uint8_t> labels;

    MaskVolume() = default;
    explicit MaskVolume(const GridMeta &m, std::uint8_t fill = 0) : meta(m), labels(m.voxel_count(), fill) {}

    std::size_t count() const;
};

/// phi(x) = x + u(x), u in mm, x in world coordinates.
struct DisplacementField {
    GridMeta meta;
    std::vector<Vec3> u;

    DisplacementField() = default;
    explicit DisplacementField(const GridMeta &m, const Vec3 &fill = {}) : meta(m), u(m.voxel_count(), fill) {}

    Vec3 &at(int i, int j, int k) { return u[meta.index(i, j, k)]; }
    const Vec3 &at(int i, int j, int k) const { return u[meta.index(i, j, k)]; }

    /// Largest absolute component over the grid.
    double max_abs() const;
};

/// Infinity norm of the component-wise difference a - b.
double max_abs_difference(const DisplacementField &a, const DisplacementField &b);

/// Checks the container invariants (lengths, finiteness, 0/1 labels); throws ValidationError.
void validate(const ScalarVolume &vol);
void validate(const MaskVolume &mask);
void validate(const DisplacementField &field);

/// Calls fn(i, j, k, linear_index) over the grid in storage order.
template <class Fn>
void for_each_voxel(const GridMeta &meta, Fn &&fn) {
    std::size_t n = 0;
    for (int k = 0; k < meta.dims[2]; ++k) {
        for (int j = 0; j < meta.dims[1]; ++j) {
            for (int i = 0; i < meta.dims[0]; ++i, ++n) {
                fn(i, j, k, n);
            }
        }
    }
}

} // namespace respmodel
