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

#include <vector>

#include "respmodel/grid.h"

namespace respmodel::detail {

/// Separable Gaussian with replicated borders; sigma in voxels.
std::vector<double> gaussian_smooth(const GridMeta &m, const std::vector<double> &data, double sigma);
std::vector<Vec3> gaussian_smooth(const GridMeta &m, const std::vector<Vec3> &data, double sigma);

/// Gaussian smoothing restricted to each mask label (normalized convolution per label).
std::vector<Vec3> masked_gaussian_smooth(const GridMeta &m, const std::vector<Vec3> &data,
                                         const std::vector<std::uint8_t> &labels, double sigma);

/// 3x3x3 box filter with replicated borders.
std::vector<double> box3(const GridMeta &m, const std::vector<double> &data);

/// Central-difference image gradient in world units, one-sided at the borders.
std::vector<Vec3> image_gradient(const GridMeta &m, const std::vector<double> &data);

} // namespace respmodel::detail
