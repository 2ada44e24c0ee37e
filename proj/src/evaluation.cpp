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

#include "respmodel/evaluation.h"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>

#include "parallel.h"
#include "respmodel/atlas.h"
#include "respmodel/field_ops.h"
#include "respmodel/motion_model.h"
#include "respmodel/rvf_io.h"

namespace respmodel {

namespace fs = std::filesystem;
using nlohmann::json;

double dice(const MaskVolume &a, const MaskVolume &b) {
    require_same_grid(a.meta, b.meta, "dice");
    std::size_t na = 0;
    std::size_t nb = 0;
    std::size_t both = 0;
    for (std::size_t n = 0; n < a.labels.size(); ++n) {
        const bool x = a.labels[n] != 0;
        const bool y = b.labels[n] != 0;
        na += x;
        nb += y;
        both += x && y;
    }
    if (na + nb == 0) {
        return 1.0;
    }
    return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

MaskVolume warp_mask(const MaskVolume &mask, const DisplacementField &field) {
    require_same_grid(mask.meta, field.meta, "warp_mask");
    return threshold(warp_image(to_scalar(mask), field), 0.5);
}

DiceStats summarize(std::vector<double> values) {
    DiceStats s;
    s.values = std::move(values);
    if (s.values.empty()) {
        return s;
    }
    std::vector<double> sorted = s.values;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    s.median = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    s.min = sorted.front();
    s.max = sorted.back();
    return s;
}

namespace {

json stats_json(const DiceStats &s) {
    return {{"values", s.values}, {"median", s.median}, {"min", s.min}, {"max", s.max}};
}

void append(std::vector<double> &all, const DiceStats &s) { all.insert(all.end(), s.values.begin(), s.values.end()); }

} // namespace

json dice_report_to_json(const DiceReport &report) {
    json structures = json::object();
    for (const auto &[name, s] : report.structures) {
        structures[name] = {{"pre", stats_json(s.pre)}, {"post", stats_json(s.post)}, {"motion", stats_json(s.motion)}};
    }
    return {
        {"schema", "dice-report-1"},
        {"folds", report.folds},
        {"references", report.references},
        {"structures", structures},
        {"overall_median", {{"pre", report.median_pre}, {"post", report.median_post}, {"motion", report.median_motion}}},
    };
}

void write_dice_table(std::ostream &out, const DiceReport &report) {
    const auto flags = out.flags();
    out << std::left << std::setw(14) << "structure" << std::setw(8) << "stage" << std::right << std::setw(9)
        << "median" << std::setw(9) << "min" << std::setw(9) << "max" << "\n";
    out << std::fixed << std::setprecision(4);
    for (const auto &[name, s] : report.structures) {
        for (const auto &[stage, stats] : {std::pair{"pre", &s.pre}, {"post", &s.post}, {"motion", &s.motion}}) {
            if (stats->values.empty()) {
                continue;
            }
            out << std::left << std::setw(14) << name << std::setw(8) << stage << std::right << std::setw(9)
                << stats->median << std::setw(9) << stats->min << std::setw(9) << stats->max << "\n";
        }
    }
    out << std::left << std::setw(14) << "overall" << std::setw(8) << "pre" << std::right << std::setw(9)
        << report.median_pre << "\n";
    out << std::left << std::setw(14) << "overall" << std::setw(8) << "post" << std::right << std::setw(9)
        << report.median_post << "\n";
    out << std::left << std::setw(14) << "overall" << std::setw(8) << "motion" << std::right << std::setw(9)
        << report.median_motion << "\n";
    out.flags(flags);
}

void write_dice_csv(std::ostream &out, const DiceReport &report) {
    out << "fold,structure,stage,dice\n";
    char buf[32];
    for (std::size_t f = 0; f < report.folds.size(); ++f) {
        for (const auto &[name, s] : report.structures) {
            for (const auto &[stage, stats] : {std::pair{"pre", &s.pre}, {"post", &s.post}, {"motion", &s.motion}}) {
                if (f < stats->values.size()) {
                    std::snprintf(buf, sizeof(buf), "%.6f", stats->values[f]);
                    out << report.folds[f] << "," << name << "," << stage << "," << buf << "\n";
                }
            }
        }
    }
}

void save_dice_report(const fs::path &dir, const DiceReport &report) {
    fs::create_directories(dir);
    auto open = [&](const char *name) {
        std::ofstream out(dir / name, std::ios::trunc);
        if (!out) {
            throw IoError("cannot write " + (dir / name).string());
        }
        return out;
    };
    open("dice_report.json") << dice_report_to_json(report).dump(2) << "\n";
    auto table = open("dice_report.txt");
    write_dice_table(table, report);
    auto csv = open("dice_folds.csv");
    write_dice_csv(csv, report);
}

EvalSubject subject_from_phantom(const PhantomTruth &truth) {
    return {truth.dataset, truth.true_masks, truth.true_fields};
}

EvalSubject load_subject(const fs::path &manifest) {
    EvalSubject s;
    s.data = load_dataset(manifest);
    const fs::path tdir = manifest.parent_path() / "truth";
    const fs::path tfile = tdir / "truth.json";
    if (!fs::exists(tfile)) {
        return s;
    }
    std::ifstream in(tfile);
    if (!in) {
        throw IoError("cannot open " + tfile.string());
    }
    try {
        const json doc = json::parse(in);
        for (const auto &phase : doc.at("phases")) {
            s.true_fields.push_back(rvf::read_field(tdir / phase.at("field").get<std::string>()));
            std::map<std::string, MaskVolume> masks;
            for (const auto &[name, file] : phase.at("masks").items()) {
                masks[name] = rvf::read_mask(tdir / file.get<std::string>());
            }
            s.phase_masks.push_back(std::move(masks));
        }
    } catch (const json::exception &e) {
        throw IoError("malformed " + tfile.string() + ": " + e.what());
    }
    if (s.true_fields.size() != s.data.phases.size()) {
        throw InconsistentPhaseCount("truth of " + s.data.patient_id + " does not match its phase count");
    }
    return s;
}

namespace {

struct FoldScores {
    std::string reference;
    std::map<std::string, double> pre, post, motion;
};

std::vector<std::string> structure_names(const EvalSubject &held, const MeanAtlas &atlas,
                                         const std::vector<std::string> &requested) {
    std::vector<std::string> names;
    if (!requested.empty()) {
        for (const auto &n : requested) {
            if (!held.data.masks.contains(n) || !atlas.reference_masks.contains(n)) {
                throw ValidationError("structure '" + n + "' missing for fold " + held.data.patient_id);
            }
        }
        return requested;
    }
    for (const auto &[n, mask] : held.data.masks) {
        if (n != "body" && atlas.reference_masks.contains(n)) {
            names.push_back(n);
        }
    }
    return names;
}

FoldScores score_fold(const EvalSubject &held, std::span<const PatientMotionSet> others, const EvalConfig &cfg) {
    FoldScores out;
    out.reference = others.front().patient_id;
    const MeanAtlas atlas = build_mean_atlas(others, out.reference, cfg.inter);
    const ScalarVolume &target = held.data.ref_image();
    const TransferResult transfer = transfer_to_new(atlas, target, cfg.inter);

    std::optional<DisplacementField> motion_field;
    std::size_t peak = 0;
    if (!held.phase_masks.empty()) {
        const auto &v = held.data.signal.v;
        peak = static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
        const DisplacementField predicted =
            predict(transfer.model, held.data.signal.v[peak], held.data.signal.v_prime[peak]);
        motion_field = compose_fields(transfer.atlas_to_new, predicted);
    }

    for (const auto &name : structure_names(held, atlas, cfg.structures)) {
        const MaskVolume atlas_mask = resample_mask(atlas.reference_masks.at(name), target.meta);
        const MaskVolume &truth = held.data.masks.at(name);
        out.pre[name] = dice(atlas_mask, truth);
        out.post[name] = dice(warp_mask(atlas_mask, transfer.atlas_to_new), truth);
        if (motion_field) {
            const auto &phase_truth = held.phase_masks.at(peak);
            const auto it = phase_truth.find(name);
            if (it != phase_truth.end()) {
                out.motion[name] = dice(warp_mask(atlas_mask, *motion_field), it->second);
            }
        }
    }
    return out;
}

} // namespace

DiceReport leave_one_out(std::vector<EvalSubject> population, const EvalConfig &cfg) {
    if (population.size() < 3) {
        throw TooFewPatients("leave-one-out needs at least 3 patients, got " + std::to_string(population.size()));
    }
    std::sort(population.begin(), population.end(),
              [](const EvalSubject &a, const EvalSubject &b) { return a.data.patient_id < b.data.patient_id; });
    for (std::size_t i = 1; i < population.size(); ++i) {
        if (population[i].data.patient_id == population[i - 1].data.patient_id) {
            throw ValidationError("duplicate patient id " + population[i].data.patient_id);
        }
    }
    cfg.inter.validate();

    const std::size_t n = population.size();
    std::vector<PatientMotionSet> motion(n);
    detail::parallel_for(n, cfg.jobs, [&](std::size_t p) {
        const EvalSubject &s = population[p];
        if (cfg.use_true_fields && !s.true_fields.empty()) {
            motion[p] = motion_set_from_fields(s.data, s.true_fields);
        } else {
            motion[p] = estimate_patient_motion(s.data, cfg.intra);
        }
    });

    std::vector<FoldScores> folds(n);
    detail::parallel_for(n, cfg.jobs, [&](std::size_t h) {
        std::vector<PatientMotionSet> others;
        for (std::size_t p = 0; p < n; ++p) {
            if (p != h) {
                others.push_back(motion[p]);
            }
        }
        folds[h] = score_fold(population[h], others, cfg);
    });

    DiceReport report;
    std::map<std::string, std::vector<double>> pre, post, mot;
    for (std::size_t h = 0; h < n; ++h) {
        report.folds.push_back(population[h].data.patient_id);
        report.references.push_back(folds[h].reference);
        for (const auto &[k, v] : folds[h].pre) {
            pre[k].push_back(v);
        }
        for (const auto &[k, v] : folds[h].post) {
            post[k].push_back(v);
        }
        for (const auto &[k, v] : folds[h].motion) {
            mot[k].push_back(v);
        }
    }
    std::vector<double> all_pre, all_post, all_motion;
    for (const auto &[k, v] : pre) {
        StructureScores &s = report.structures[k];
        s.pre = summarize(v);
        s.post = summarize(post[k]);
        s.motion = summarize(mot[k]);
        append(all_pre, s.pre);
        append(all_post, s.post);
        append(all_motion, s.motion);
    }
    report.median_pre = summarize(all_pre).median;
    report.median_post = summarize(all_post).median;
    report.median_motion = summarize(all_motion).median;
    return report;
}

} // namespace respmodel
