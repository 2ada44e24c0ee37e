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
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "respmodel/grid.h"
#include "respmodel/surrogate.h"

namespace respmodel {

/// One 4D patient in memory: phase images, phase-indexed surrogate, reference-phase masks.
struct Dataset4D {
    std::string patient_id;
    std::size_t ref_phase = 0;
    std::vector<ScalarVolume> phases;
    SurrogateSignal signal; // one sample per phase
    std::map<std::string, MaskVolume> masks;

    const ScalarVolume &ref_image() const { return phases.at(ref_phase); }
    const GridMeta &grid() const { return phases.at(ref_phase).meta; }

    /// Phase count, reference index, shared grid and signal length; throws ValidationError.
    void validate() const;
};

/// Mask used to decouple SMP regularization: "sliding" if present, otherwise the union of all
/// masks except "body". Empty when the dataset carries no masks.
std::optional<MaskVolume> sliding_mask_for(const Dataset4D &data);

/// Resample every volume onto `target` (no-op when the grid already matches).
Dataset4D resample_dataset(const Dataset4D &data, const GridMeta &target);

/// ds4d-1 manifest: {schema, patient_id, ref_phase_index, phases:[{index, image}], signal, masks:{name: path}}.
/// Paths are relative to the manifest's directory.
Dataset4D load_dataset(const std::filesystem::path &manifest);

/// Writes manifest.json plus phase, signal and mask files into `dir`; returns the manifest path.
std::filesystem::path save_dataset(const std::filesystem::path &dir, const Dataset4D &data);

} // namespace respmodel
