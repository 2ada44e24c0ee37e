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
#include <span>
#include <string>
#include <vector>

#include "respmodel/dataset.h"
#include "respmodel/motion_model.h"
#include "respmodel/registration.h"

namespace respmodel {

/// Intra-patient motion of one 4D patient in its own reference frame.
/// phase_fields[j] maps reference-phase anatomy onto phase j: I_j ~ I_ref o phi_j.
struct PatientMotionSet {
    std::string patient_id;
    std::size_t ref_phase = 0;
    std::vector<DisplacementField> phase_fields; // zero at ref_phase
    SurrogateSignal signal;
    ScalarVolume ref_image;
    std::map<std::string, MaskVolume> masks;

    void validate() const;
};

/// Registers every phase j != ref (fixed = phase j, moving = reference phase) with `intra`.
/// SMP configs without a sliding mask take the dataset's sliding mask, or fall back to DNL
/// with a warning when the dataset has no masks.
PatientMotionSet estimate_patient_motion(const Dataset4D &data, const RegistrationConfig &intra,
                                         std::size_t jobs = 1);

/// Wraps already known phase fields (e.g. phantom ground truth).
PatientMotionSet motion_set_from_fields(const Dataset4D &data, std::vector<DisplacementField> fields);

/// Patient-specific model fitted on its own fields and signal.
MotionModel fit_patient_model(const PatientMotionSet &patient, FitDiagnostics *diagnostics = nullptr);

struct MeanAtlas {
    std::string ref_patient_id;
    std::size_t ref_phase = 0;
    std::vector<DisplacementField> mean_phase_fields;
    SurrogateSignal mean_signal;
    ScalarVolume mean_image;
    MotionModel mean_model;
    std::map<std::string, MaskVolume> reference_masks; // structures in the reference frame

    const GridMeta &grid() const { return mean_image.meta; }
};

/// Inter-patient field on the reference grid: patient.ref_image(x + u(x)) ~ reference.ref_image(x).
DisplacementField register_to_reference(const PatientMotionSet &patient, const PatientMotionSet &reference,
                                        const RegistrationConfig &cfg);

/// Conjugates a motion field into the frame of the registration target. `phi_inter` is a
/// registration result (target -> source anatomy); the returned field is
/// phi_inter^-1 o phi_j o phi_inter, evaluated right to left.
DisplacementField transport_field(const DisplacementField &phi_j, const DisplacementField &phi_inter,
                                  double inverse_tol = 0.01, int inverse_max_iter = 50);

/// Voxelwise mean.
DisplacementField average_fields(std::span<const DisplacementField> fields);

struct AtlasOptions {
    bool include_reference = true; // the reference patient contributes its own fields and image
    std::size_t jobs = 1;
};

/// Mean motion/intensity atlas in the frame of `reference_id`.
MeanAtlas build_mean_atlas(std::span<const PatientMotionSet> patients, const std::string &reference_id,
                           const RegistrationConfig &inter, const AtlasOptions &options = {});

struct TransferResult {
    MotionModel model;                            // on new_image's grid
    DisplacementField atlas_to_new;               // atlas.mean_image(x + u(x)) ~ new_image(x)
    std::vector<DisplacementField> phase_fields;  // transported mean phase fields
    FitDiagnostics fit;
};

/// Registers the atlas mean image to a static image, transports the mean phase fields and
/// refits the regression against the mean signal. Throws GridMismatch when the physical
/// extents differ by more than a factor of two.
TransferResult transfer_to_new(const MeanAtlas &atlas, const ScalarVolume &new_image, const RegistrationConfig &inter);

/// Atlas directory: atlas.json, mean_image.rvf, phase_XX.rvf, signal.csv, mask_<name>.rvf, model/.
void save_atlas(const std::filesystem::path &dir, const MeanAtlas &atlas);
MeanAtlas load_atlas(const std::filesystem::path &dir);

/// Fit directory written by the fit stage: fit.json, fields/, model/, plus the patient data.
void save_motion_set(const std::filesystem::path &dir, const PatientMotionSet &patient);
PatientMotionSet load_motion_set(const std::filesystem::path &dir);

} // namespace respmodel
