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

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "respmodel/evaluation.h"
#include "respmodel/phantom.h"
#include "respmodel/registration.h"
#include "respmodel/surrogate.h"

namespace respmodel {

struct PipelineConfig {
    RegistrationConfig intra = RegistrationConfig::intra_patient();
    RegistrationConfig inter = RegistrationConfig::inter_patient();
    int resolution = 64; // working grid edge length [voxels]
    std::filesystem::path out = "out";
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
    int frames = 0;          // animate: 0 means every signal sample
    bool simulate = false;   // animate: drive with a simulated signal
    std::string reference;   // atlas: reference patient id, empty means the first input
    bool use_true_fields = false; // evaluate: use phantom truth instead of intra-patient registration
    PhantomConfig phantom;
    std::vector<PopulationMember> population = default_population();
    SignalSimConfig simulation;

    /// Throws InvalidConfig; resolution must be a power of two in [32, 256].
    void validate() const;
};

/// Overlays the keys of `doc` on the defaults. Relative paths resolve against base_dir.
PipelineConfig pipeline_config_from_json(const nlohmann::json &doc, const std::filesystem::path &base_dir = {});
nlohmann::json pipeline_config_to_json(const PipelineConfig &cfg);

/// Cubic working grid with the extent of `meta`.
GridMeta working_grid(const GridMeta &meta, int resolution);

/// Each command writes into cfg.out and returns the written manifest or directory.
std::filesystem::path cmd_phantom(const PipelineConfig &cfg);
std::filesystem::path cmd_fit_patient(const std::filesystem::path &manifest, const PipelineConfig &cfg);
std::filesystem::path cmd_build_atlas(const std::vector<std::filesystem::path> &inputs, const PipelineConfig &cfg);
std::filesystem::path cmd_transfer(const std::filesystem::path &atlas_dir, const std::filesystem::path &new_image,
                                   const PipelineConfig &cfg);
std::vector<std::filesystem::path> cmd_animate(const std::filesystem::path &model_dir,
                                               const std::filesystem::path &ref_image,
                                               const std::filesystem::path &signal_csv, const PipelineConfig &cfg);
DiceReport cmd_evaluate(const std::filesystem::path &population_dir, const PipelineConfig &cfg);

/// Exit codes: 0 success, 2 I/O, 3 numerical failure, 4 validation or usage error.
int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

} // namespace respmodel
