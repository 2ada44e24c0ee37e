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
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "respmodel/dataset.h"
#include "respmodel/grid.h"

namespace respmodel {

/// Soft-edged ellipsoid; center is relative to the grid center [mm].
struct Ellipsoid {
    Vec3 center;
    Vec3 radii;
    double intensity = 0.0;
};

struct PhantomOrgan {
    std::string name;
    Ellipsoid shape;
    Vec3 peak; // displacement at the organ center at peak inhale [mm]
};

/// Synthetic thorax/abdomen: static body envelope with moving liver and lungs.
///
/// The motion law is linear in the surrogate, u(x, j) = B(x) (v_j - v_ref) / signal_amp
/// + H(x) (v'_j - v'_ref), where B blends Gaussian bumps (one per organ, widths equal to
/// the organ radii) such that B(center_o) = peak_o exactly, and H is the same blend scaled to
/// hysteresis * hysteresis_direction.
struct PhantomConfig {
    std::string patient_id = "phantom";
    Dims dims{64, 64, 64};
    Vec3 spacing{2.0, 2.0, 2.0};
    double background = 0.0;
    Ellipsoid body{{0.0, 0.0, 0.0}, {50.0, 40.0, 52.0}, 0.5};
    std::vector<PhantomOrgan> organs = default_organs();
    double hysteresis = 0.003;                 // [mm per (ml per phase)]
    Vec3 hysteresis_direction{0.0, 1.0, 0.0}; // anterior-posterior
    int n_phases = 10;
    std::size_t ref_phase = 0;
    double signal_amp = 1000.0; // [ml]
    double edge_width = 2.0;    // sigmoid transition band, -eps..+eps [voxels]
    std::uint64_t seed = 0;

    static std::vector<PhantomOrgan> default_organs();

    /// Scales every organ's peak so the liver peak has the given magnitude.
    void set_amplitude(double liver_peak_mm);

    /// Throws InvalidConfig.
    void validate() const;
};

PhantomConfig phantom_config_from_json(const nlohmann::json &doc);
nlohmann::json phantom_config_to_json(const PhantomConfig &cfg);

/// Similarity perturbation about the grid center: x -> c + scale (x - c) + translation.
struct Perturbation {
    Vec3 translation;
    double scale = 1.0;
};

struct PhantomTruth {
    PhantomConfig cfg;
    Perturbation anatomy;                     // accumulated perturbation of the base anatomy
    Dataset4D dataset;                        // phase images, signal, reference-phase masks
    std::vector<DisplacementField> true_fields; // phase image j == ref image o true_fields[j]
    std::vector<std::map<std::string, MaskVolume>> true_masks; // per phase
};

/// Evaluates the analytic anatomy at displaced coordinates for every phase.
PhantomTruth generate(const PhantomConfig &cfg);

/// New patient whose anatomy is the perturbed original; true fields are transported
/// analytically (u'(x) = s u(T^-1 x)). Throws OutOfGrid if organs leave the grid.
PhantomTruth perturb_patient(const PhantomTruth &truth, const Perturbation &p);

/// Analytic displacement of the unperturbed motion law at world point x for phase j.
Vec3 phantom_displacement(const PhantomConfig &cfg, const Vec3 &x, std::size_t phase);

/// Population description: base anatomy plus per-patient amplitude and perturbation.
struct PopulationMember {
    std::string id;
    double amplitude = 3.0; // liver peak [mm]
    Perturbation perturbation;
};

std::vector<PopulationMember> default_population();

/// Generates each member from `base` (patient ids and amplitudes overridden).
std::vector<PhantomTruth> generate_population(const PhantomConfig &base, const std::vector<PopulationMember> &members);

/// Persists dataset manifest plus truth/ (per-phase fields and masks).
std::filesystem::path save_phantom(const std::filesystem::path &dir, const PhantomTruth &truth);

} // namespace respmodel
