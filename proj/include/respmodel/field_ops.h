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

#include "respmodel/grid.h"

namespace respmodel {

/// Trilinear interpolation at a world point; outside the grid the sample is clamped to the edge.
double sample_trilinear(const ScalarVolume &vol, const Vec3 &p);

/// Component-wise trilinear sample of a displacement field, clamp-to-edge.
Vec3 sample_trilinear(const DisplacementField &field, const Vec3 &p);

/// Backward warp: out(x) = img(x + u(x)).
ScalarVolume warp_image(const ScalarVolume &img, const DisplacementField &field);

/// outer o inner, i.e. u(x) = u_inner(x) + u_outer(x + u_inner(x)).
DisplacementField compose_fields(const DisplacementField &outer, const DisplacementField &inner);

struct FieldInverse {
    DisplacementField field;
    /// ||compose_fields(input, field) - identity||_inf in mm.
    double residual = 0.0;
    int iterations = 0;
};

inline constexpr double kDefaultInverseTol = 0.01;
inline constexpr int kDefaultInverseMaxIter = 50;

/// Fixed-point inversion v <- -u(x + v(x)), starting from v = 0.
/// Throws NonConvergence if the final residual exceeds 10 * tol.
FieldInverse invert_field(const DisplacementField &field, double tol = kDefaultInverseTol,
                          int max_iter = kDefaultInverseMaxIter);

/// Resample onto new_dims covering the same physical extent.
ScalarVolume resample_volume(const ScalarVolume &vol, const Dims &new_dims);
DisplacementField resample_field(const DisplacementField &field, const Dims &new_dims);

/// Resample onto an arbitrary target grid by sampling at its world points.
ScalarVolume resample_volume(const ScalarVolume &vol, const GridMeta &target);
DisplacementField resample_field(const DisplacementField &field, const GridMeta &target);
MaskVolume resample_mask(const MaskVolume &mask, const GridMeta &target);

/// 0/1 mask as a scalar volume and back (threshold at 0.5).
ScalarVolume to_scalar(const MaskVolume &mask);
MaskVolume threshold(const ScalarVolume &vol, double level = 0.5);

} // namespace respmodel
