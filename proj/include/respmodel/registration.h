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
#include <optional>
#include <vector>

#include "json.hpp"
#include "respmodel/grid.h"

namespace respmodel {

enum class Metric { NSSD, SSD };
enum class Regularizer { SMP, DNL };

/// Variational registration settings. `weight` is alpha (intra-patient) or beta (inter-patient).
struct RegistrationConfig {
    Metric metric = Metric::NSSD;
    Regularizer regularizer = Regularizer::DNL;
    double weight = 0.1;
    int levels = 3;
    int iters_per_level = 100;
    double step_size = 0.5; // [mm], largest per-voxel update of one descent step
    std::optional<MaskVolume> sliding_mask;

    /// Throws InvalidConfig.
    void validate() const;

    /// NSSD + SMP, alpha = 0.1. Without a mask, per-patient masks are filled in by the caller.
    static RegistrationConfig intra_patient(std::optional<MaskVolume> sliding_mask = std::nullopt);
    /// SSD + DNL, beta = 1.0.
    static RegistrationConfig inter_patient();
};

/// JSON with the same field names; sliding_mask is null or the path of an RVF mask
/// (relative paths resolve against base_dir).
RegistrationConfig registration_config_from_json(const nlohmann::json &doc,
                                                 const std::filesystem::path &base_dir = {});
nlohmann::json registration_config_to_json(const RegistrationConfig &cfg,
                                           const std::optional<std::string> &sliding_mask_path = std::nullopt);

struct RegistrationResult {
    DisplacementField field;
    double final_metric = 0.0;
    /// Objective (metric + weighted regularizer) after every accepted step, all levels in order.
    std::vector<double> metric_trace;
    /// Index into metric_trace where the finest level begins.
    std::size_t last_level_start = 0;
};

/// Mean squared difference after z-scoring both volumes over the grid.
double metric_nssd(const ScalarVolume &fixed, const ScalarVolume &warped_moving);

/// Mean squared difference, no normalization.
double metric_ssd(const ScalarVolume &fixed, const ScalarVolume &warped_moving);

struct RegularizerTerm {
    double energy = 0.0;
    std::vector<Vec3> gradient; // dE/du per voxel
};

/// Diffusion energy 1/2 sum_c sum_edges ((u_c(y) - u_c(x)) / h)^2 over all axis-neighbour
/// pairs (x, y) of the grid; its gradient is the negative discrete Laplacian with
/// reflecting borders.
RegularizerTerm reg_grad_dnl(const DisplacementField &field);

/// As reg_grad_dnl but only over neighbour pairs that carry the same mask label, so the
/// two regions are smoothed independently and may slide along their interface.
RegularizerTerm reg_grad_smp(const DisplacementField &field, const MaskVolume &mask);

/// Multi-resolution gradient descent on metric + weight * var(fixed) * regularizer / N_vox.
/// Returns u such that moving(x + u(x)) approximates fixed(x), on the fixed grid.
RegistrationResult register_volumes(const ScalarVolume &fixed, const ScalarVolume &moving,
                                    const RegistrationConfig &cfg);

/// (vol - mean) / std over the grid; a constant volume only loses its mean.
ScalarVolume zscore(const ScalarVolume &vol);

} // namespace respmodel
