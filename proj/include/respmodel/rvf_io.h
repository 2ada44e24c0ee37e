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

#include <filesystem>

#include "respmodel/grid.h"

namespace respmodel {

/// RVF volumes: a JSON sidecar `<name>.rvf` describing the grid and a raw
/// little-endian float32 payload `<name>.raw` next to it. Field payloads
/// interleave (ux,uy,uz) per voxel.
namespace rvf {

enum class Kind { scalar, field, mask };

struct Header {
    Kind kind = Kind::scalar;
    GridMeta meta;
    std::filesystem::path data_file; // absolute, resolved against the sidecar
};

Header read_header(const std::filesystem::path &sidecar);

void write(const std::filesystem::path &sidecar, const ScalarVolume &vol);
void write(const std::filesystem::path &sidecar, const DisplacementField &field);
void write(const std::filesystem::path &sidecar, const MaskVolume &mask);

ScalarVolume read_scalar(const std::filesystem::path &sidecar);
DisplacementField read_field(const std::filesystem::path &sidecar);
MaskVolume read_mask(const std::filesystem::path &sidecar);

} // namespace rvf
} // namespace respmodel
