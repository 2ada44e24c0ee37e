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

#include "respmodel/field_ops.h"

#include <algorithm>
#include <sstream>

#include "interp.h"

namespace respmodel {

double sample_trilinear(const ScalarVolume &vol, const Vec3 &p) {
    return detail::sample_at_index(vol.meta, vol.values.data(), vol.meta.to_index(p));
}

Vec3 sample_trilinear(const DisplacementField &field, const Vec3 &p) {
    return detail::sample_at_index(field.meta, field.u.data(), field.meta.to_index(p));
}

ScalarVolume warp_image(const ScalarVolume &img, const DisplacementField &field) {
    require_same_grid(img.meta, field.meta, "warp_image");
    ScalarVolume out(img.meta);
    const GridMeta &m = img.meta;
    for_each_voxel(m, [&](int i, int j, int k, std::size_t n) {
        const Vec3 &d = field.u[n];
        const Vec3 c{i + d.x / m.spacing.x, j + d.y / m.spacing.y, k + d.z / m.spacing.z};
        out.values[n] = detail::sample_at_index(m, img.values.data(), c);
    });
    return out;
}

DisplacementField compose_fields(const DisplacementField &outer, const DisplacementField &inner) {
    require_same_grid(outer.meta, inner.meta, "compose_fields");
    DisplacementField out(inner.meta);
    const GridMeta &m = inner.meta;
    for_each_voxel(m, [&](int i, int j, int k, std::size_t n) {
        const Vec3 &d = inner.u[n];
        const Vec3 c{i + d.x / m.spacing.x, j + d.y / m.spacing.y, k + d.z / m.spacing.z};
        out.u[n] = d + detail::sample_at_index(m, outer.u.data(), c);
    });
    return out;
}

FieldInverse invert_field(const DisplacementField &field, double tol, int max_iter) {
    if (!(tol > 0.0) || max_iter < 1) {
        throw InvalidConfig("invert_field: tol must be > 0 and max_iter >= 1");
    }
    const GridMeta &m = field.meta;
    FieldInverse result{DisplacementField(m), 0.0, 0};
    DisplacementField next(m);
    for (int it = 1; it <= max_iter; ++it) {
        double update = 0.0;
        for_each_voxel(m, [&](int i, int j, int k, std::size_t n) {
            const Vec3 &v = result.field.u[n];
            const Vec3 c{i + v.x / m.spacing.x, j + v.y / m.spacing.y, k + v.z / m.spacing.z};
            next.u[n] = -detail::sample_at_index(m, field.u.data(), c);
            update = std::max(update, max_abs(next.u[n] - v));
        });
        std::swap(result.field.u, next.u);
        result.iterations = it;
        if (update < tol) {
            break;
        }
    }

    // residual of field o inverse against the identity
    const DisplacementField check = compose_fields(field, result.field);
    result.residual = check.max_abs();
    if (!(result.residual <= 10.0 * tol)) {
        std::ostringstream os;
        os << "invert_field: residual " << result.residual << " mm after " << result.iterations
           << " iterations exceeds " << 10.0 * tol << " mm";
        throw NonConvergence(os.str());
    }
    return result;
}

ScalarVolume resample_volume(const ScalarVolume &vol, const GridMeta &target) {
    target.validate();
    if (target.same_grid(vol.meta)) {
        return vol;
    }
    ScalarVolume out(target);
    for_each_voxel(target, [&](int i, int j, int k, std::size_t n) {
        out.values[n] = sample_trilinear(vol, target.world(i, j, k));
    });
    return out;
}

DisplacementField resample_field(const DisplacementField &field, const GridMeta &target) {
    target.validate();
    if (target.same_grid(field.meta)) {
        return field;
    }
    DisplacementField out(target);
    for_each_voxel(target, [&](int i, int j, int k, std::size_t n) {
        out.u[n] = sample_trilinear(field, target.world(i, j, k));
    });
    return out;
}

ScalarVolume resample_volume(const ScalarVolume &vol, const Dims &new_dims) {
    return resample_volume(vol, vol.meta.resized(new_dims));
}

DisplacementField resample_field(const DisplacementField &field, const Dims &new_dims) {
    return resample_field(field, field.meta.resized(new_dims));
}

MaskVolume resample_mask(const MaskVolume &mask, const GridMeta &target) {
    if (target.same_grid(mask.meta)) {
        return mask;
    }
    return threshold(resample_volume(to_scalar(mask), target));
}

ScalarVolume to_scalar(const MaskVolume &mask) {
    ScalarVolume out(mask.meta);
    std::transform(mask.labels.begin(), mask.labels.end(), out.values.begin(),
                   [](std::uint8_t l) { return static_cast<double>(l); });
    return out;
}

MaskVolume threshold(const ScalarVolume &vol, double level) {
    MaskVolume out(vol.meta);
    std::transform(vol.values.begin(), vol.values.end(), out.labels.begin(),
                   [level](double v) { return static_cast<std::uint8_t>(v >= level ? 1 : 0); });
    return out;
}

} // namespace respmodel
