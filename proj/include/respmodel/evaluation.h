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
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "respmodel/dataset.h"
#include "respmodel/phantom.h"
#include "respmodel/registration.h"

namespace respmodel {

/// 2|A n B| / (|A| + |B|); 1 when both masks are empty. Throws GridMismatch.
double dice(const MaskVolume &a, const MaskVolume &b);

/// Backward warp of the 0/1 raster with trilinear sampling, thresholded at 0.5.
MaskVolume warp_mask(const MaskVolume &mask, const DisplacementField &field);

struct DiceStats {
    std::vector<double> values; // one per fold, in fold order
    double median = 0.0;
    double min = 0.0;
    double max = 0.0;
};

DiceStats summarize(std::vector<double> values);

/// Scores of one structure. pre: atlas mask against the held-out mask without any warp;
/// post: after the atlas-to-patient registration; motion: after the transferred model's
/// prediction at the held-out patient's peak-inhale phase (empty without phase truth).
struct StructureScores {
    DiceStats pre;
    DiceStats post;
    DiceStats motion;
};

struct DiceReport {
    std::vector<std::string> folds; // held-out patient ids, sorted
    std::vector<std::string> references;
    std::map<std::string, StructureScores> structures;
    double median_pre = 0.0;
    double median_post = 0.0;
    double median_motion = 0.0;
};

nlohmann::json dice_report_to_json(const DiceReport &report);
void write_dice_table(std::ostream &out, const DiceReport &report);
/// Columns: fold,structure,stage,dice.
void write_dice_csv(std::ostream &out, const DiceReport &report);
/// dice_report.json, dice_report.txt, dice_folds.csv.
void save_dice_report(const std::filesystem::path &dir, const DiceReport &report);

/// One patient of an evaluation population. phase_masks and true_fields are optional truth.
struct EvalSubject {
    Dataset4D data;
    std::vector<std::map<std::string, MaskVolume>> phase_masks;
    std::vector<DisplacementField> true_fields;
};

EvalSubject subject_from_phantom(const PhantomTruth &truth);

/// Loads a dataset manifest and, when a sibling truth/truth.json exists, its phase truth.
EvalSubject load_subject(const std::filesystem::path &manifest);

struct EvalConfig {
    RegistrationConfig intra = RegistrationConfig::intra_patient();
    RegistrationConfig inter = RegistrationConfig::inter_patient();
    bool use_true_fields = false;        // skip intra-patient registration when truth is present
    std::vector<std::string> structures; // empty: every mask except "body"
    std::size_t jobs = 1;
};

/// For every held-out patient (sorted by id) the atlas is built from the others, with the
/// first remaining id as reference, and transferred onto the held-out reference image.
/// Throws TooFewPatients for fewer than three subjects.
DiceReport leave_one_out(std::vector<EvalSubject> population, const EvalConfig &cfg);

} // namespace respmodel
