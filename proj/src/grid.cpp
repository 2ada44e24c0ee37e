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

#include "respmodel/grid.h"

#include <algorithm>
#include <sstream>

namespace respmodel {

namespace {

bool close(double a, double b, double scale) {
    return std::abs(a - b) <= 1e-9 * std::max({1.0, std::abs(a), std::abs(b), scale});
}

std::string describe(const GridMeta &m) {
    std::ostringstream os;
    os << m.dims[0] << "x" << m.dims[1] << "x" << m.dims[2] << " spacing (" << m.spacing.x << ","
       << m.spacing.y << "," << m.spacing.z << ") origin (" << m.origin.x << "," << m.origin.y << ","
       << m.origin.z << ")";
    return os.str();
}

} // namespace

void GridMeta::validate() const {
    for (int a = 0; a < 3; ++a) {
        if (dims[a] < 2) {
            throw InvalidDims("grid dimension " + std::to_string(a) + " must be >= 2, got " +
                              std::to_string(dims[a]));
        }
        if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) {
            throw InvalidDims("grid spacing must be positive and finite");
        }
        if (!std::isfinite(origin[a])) {
            throw InvalidDims("grid origin must be finite");
        }
    }
}

bool GridMeta::same_grid(const GridMeta &other) const {
    if (dims != other.dims) {
        return false;
    }
    for (int a = 0; a < 3; ++a) {
        if (!close(spacing[a], other.spacing[a], 0.0)) {
            return false;
        }
        if (!close(origin[a], other.origin[a], extent()[a])) {
            return false;
        }
    }
    return true;
}

GridMeta GridMeta::resized(const Dims &new_dims) const {
    GridMeta out;
    out.dims = new_dims;
    out.validate();
    for (int a = 0; a < 3; ++a) {
        if (new_dims[a] == dims[a]) {
            out.spacing[a] = spacing[a];
            out.origin[a] = origin[a];
            continue;
        }
        out.spacing[a] = spacing[a] * static_cast<double>(dims[a]) / static_cast<double>(new_dims[a]);
        // keep the outer voxel edge fixed
        out.origin[a] = origin[a] - 0.5 * spacing[a] + 0.5 * out.spacing[a];
    }
    return out;
}

void require_same_grid(const GridMeta &a, const GridMeta &b, const char *what) {
    if (!a.same_grid(b)) {
        throw GridMismatch(std::string(what) + ": grids differ (" + describe(a) + " vs " + describe(b) + ")");
    }
}

std::size_t MaskVolume::count() const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
}

double DisplacementField::max_abs() const {
    double m = 0.0;
    for (const Vec3 &v : u) {
        m = std::max(m, respmodel::max_abs(v));
    }
    return m;
}

double max_abs_difference(const DisplacementField &a, const DisplacementField &b) {
    require_same_grid(a.meta, b.meta, "max_abs_difference");
    double m = 0.0;
    for (std::size_t n = 0; n < a.u.size(); ++n) {
        m = std::max(m, respmodel::max_abs(a.u[n] - b.u[n]));
    }
    return m;
}

void validate(const ScalarVolume &vol) {
    vol.meta.validate();
    if (vol.values.size() != vol.meta.voxel_count()) {
        throw ShapeMismatch("scalar volume has " + std::to_string(vol.values.size()) + " values, grid has " +
                            std::to_string(vol.meta.voxel_count()) + " voxels");
    }
    for (double v : vol.values) {
        if (!std::isfinite(v)) {
            throw ValidationError("scalar volume contains non-finite values");
        }
    }
}

void validate(const MaskVolume &mask) {
    mask.meta.validate();
    if (mask.labels.size() != mask.meta.voxel_count()) {
        throw ShapeMismatch("mask length does not match grid");
    }
    for (auto l : mask.labels) {
        if (l > 1) {
            throw ValidationError("mask labels must be 0 or 1");
        }
    }
}

void validate(const DisplacementField &field) {
    field.meta.validate();
    if (field.u.size() != field.meta.voxel_count()) {
        throw ShapeMismatch("displacement field length does not match grid");
    }
    for (const Vec3 &v : field.u) {
        if (!std::isfinite(v.x) || !std::isfinite(v.y) || !std::isfinite(v.z)) {
            throw ValidationError("displacement field contains non-finite components");
        }
    }
}

} // namespace respmodel
