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

#include "respmodel/atlas.h"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "json.hpp"
#include "parallel.h"
#include "respmodel/field_ops.h"
#include "respmodel/rvf_io.h"

namespace respmodel {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string indexed(const char *stem, std::size_t j) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%s_%02zu.rvf", stem, j);
    return buf;
}

DisplacementField conjugate(const DisplacementField &phi_j, const DisplacementField &inter,
                            const DisplacementField &inter_inverse) {
    return compose_fields(inter_inverse, compose_fields(phi_j, inter));
}

PatientMotionSet on_grid(const PatientMotionSet &p, const GridMeta &target) {
    if (p.ref_image.meta.same_grid(target)) {
        return p;
    }
    PatientMotionSet out = p;
    out.ref_image = resample_volume(p.ref_image, target);
    for (auto &f : out.phase_fields) {
        f = resample_field(f, target);
    }
    for (auto &[name, mask] : out.masks) {
        mask = resample_mask(mask, target);
    }
    return out;
}

void write_json(const fs::path &path, const json &doc) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << doc.dump(2) << "\n";
}

json read_json(const fs::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    try {
        return json::parse(in);
    } catch (const json::exception &e) {
        throw IoError("malformed " + path.string() + ": " + e.what());
    }
}

json save_masks(const fs::path &dir, const std::map<std::string, MaskVolume> &masks) {
    json doc = json::object();
    for (const auto &[name, mask] : masks) {
        const std::string file = "mask_" + name + ".rvf";
        rvf::write(dir / file, mask);
        doc[name] = file;
    }
    return doc;
}

std::map<std::string, MaskVolume> load_masks(const fs::path &dir, const json &doc) {
    std::map<std::string, MaskVolume> masks;
    for (const auto &[name, file] : doc.items()) {
        masks[name] = rvf::read_mask(dir / file.get<std::string>());
    }
    return masks;
}

} // namespace

void PatientMotionSet::validate() const {
    if (phase_fields.empty()) {
        throw EmptyList("patient " + patient_id + " has no phase fields");
    }
    if (ref_phase >= phase_fields.size()) {
        throw IndexOutOfRange("patient " + patient_id + ": reference phase outside phase list");
    }
    if (signal.size() != phase_fields.size()) {
        throw ShapeMismatch("patient " + patient_id + ": signal length differs from phase count");
    }
    for (const auto &f : phase_fields) {
        require_same_grid(ref_image.meta, f.meta, "patient motion fields");
    }
}

PatientMotionSet estimate_patient_motion(const Dataset4D &data, const RegistrationConfig &intra, std::size_t jobs) {
    data.validate();
    RegistrationConfig cfg = intra;
    if (cfg.regularizer == Regularizer::SMP && !cfg.sliding_mask) {
        cfg.sliding_mask = sliding_mask_for(data);
        if (!cfg.sliding_mask) {
            std::cerr << "warning: " << data.patient_id
                      << " has no masks for sliding-motion regularization; using diffusive regularization\n";
            cfg.regularizer = Regularizer::DNL;
        }
    }
    cfg.validate();

    std::vector<DisplacementField> fields(data.phases.size(), DisplacementField(data.grid()));
    detail::parallel_for(data.phases.size(), jobs, [&](std::size_t j) {
        if (j == data.ref_phase) {
            return;
        }
        fields[j] = register_volumes(data.phases[j], data.ref_image(), cfg).field;
    });
    return motion_set_from_fields(data, std::move(fields));
}

PatientMotionSet motion_set_from_fields(const Dataset4D &data, std::vector<DisplacementField> fields) {
    PatientMotionSet p;
    p.patient_id = data.patient_id;
    p.ref_phase = data.ref_phase;
    p.phase_fields = std::move(fields);
    p.signal = data.signal;
    p.ref_image = data.ref_image();
    p.masks = data.masks;
    p.validate();
    return p;
}

MotionModel fit_patient_model(const PatientMotionSet &patient, FitDiagnostics *diagnostics) {
    patient.validate();
    return fit_fields(patient.phase_fields, make_regressors(patient.signal), diagnostics);
}

DisplacementField register_to_reference(const PatientMotionSet &patient, const PatientMotionSet &reference,
                                        const RegistrationConfig &cfg) {
    const ScalarVolume moving = resample_volume(patient.ref_image, reference.ref_image.meta);
    return register_volumes(reference.ref_image, moving, cfg).field;
}

DisplacementField transport_field(const DisplacementField &phi_j, const DisplacementField &phi_inter,
                                  double inverse_tol, int inverse_max_iter) {
    require_same_grid(phi_j.meta, phi_inter.meta, "transport_field");
    const FieldInverse inv = invert_field(phi_inter, inverse_tol, inverse_max_iter);
    return conjugate(phi_j, phi_inter, inv.field);
}

DisplacementField average_fields(std::span<const DisplacementField> fields) {
    if (fields.empty()) {
        throw EmptyList("average_fields: no fields");
    }
    DisplacementField out(fields.front().meta);
    for (const auto &f : fields) {
        require_same_grid(out.meta, f.meta, "average_fields");
        for (std::size_t n = 0; n < out.u.size(); ++n) {
            out.u[n] += f.u[n];
        }
    }
    const double inv = 1.0 / static_cast<double>(fields.size());
    if (fields.size() > 1) {
        for (Vec3 &v : out.u) {
            v *= inv;
        }
    }
    return out;
}

MeanAtlas build_mean_atlas(std::span<const PatientMotionSet> patients, const std::string &reference_id,
                           const RegistrationConfig &inter, const AtlasOptions &options) {
    if (patients.empty()) {
        throw EmptyList("build_mean_atlas: no patients");
    }
    const auto ref_it = std::find_if(patients.begin(), patients.end(),
                                     [&](const PatientMotionSet &p) { return p.patient_id == reference_id; });
    if (ref_it == patients.end()) {
        throw ValidationError("build_mean_atlas: reference '" + reference_id + "' is not in the population");
    }
    const PatientMotionSet &reference = *ref_it;
    const std::size_t n_phases = reference.phase_fields.size();
    for (const auto &p : patients) {
        p.validate();
        if (p.phase_fields.size() != n_phases) {
            throw InconsistentPhaseCount("patient " + p.patient_id + " has " + std::to_string(p.phase_fields.size()) +
                                         " phases, reference has " + std::to_string(n_phases));
        }
    }
    inter.validate();
    const GridMeta &grid = reference.ref_image.meta;

    struct Contribution {
        std::vector<DisplacementField> fields;
        ScalarVolume image;
    };
    std::vector<Contribution> contrib(patients.size());
    std::vector<std::size_t> members;
    for (std::size_t p = 0; p < patients.size(); ++p) {
        if (options.include_reference || &patients[p] != &reference) {
            members.push_back(p);
        }
    }
    if (members.empty()) {
        throw EmptyList("build_mean_atlas: no patients left once the reference is excluded");
    }

    detail::parallel_for(members.size(), options.jobs, [&](std::size_t m) {
        const std::size_t p = members[m];
        if (&patients[p] == &reference) {
            contrib[p].fields = reference.phase_fields;
            contrib[p].image = reference.ref_image;
            return;
        }
        const PatientMotionSet patient = on_grid(patients[p], grid);
        const DisplacementField phi_inter = register_to_reference(patient, reference, inter);
        const FieldInverse inv = invert_field(phi_inter);
        for (const auto &phi_j : patient.phase_fields) {
            contrib[p].fields.push_back(conjugate(phi_j, phi_inter, inv.field));
        }
        contrib[p].image = warp_image(patient.ref_image, phi_inter);
    });

    MeanAtlas atlas;
    atlas.ref_patient_id = reference.patient_id;
    atlas.ref_phase = reference.ref_phase;
    atlas.reference_masks = reference.masks;
    for (std::size_t j = 0; j < n_phases; ++j) {
        std::vector<DisplacementField> per_phase;
        for (std::size_t p : members) {
            per_phase.push_back(contrib[p].fields[j]);
        }
        atlas.mean_phase_fields.push_back(average_fields(per_phase));
    }

    std::vector<SurrogateSignal> signals;
    atlas.mean_image = ScalarVolume(grid);
    for (std::size_t p : members) {
        signals.push_back(patients[p].signal);
        for (std::size_t n = 0; n < atlas.mean_image.values.size(); ++n) {
            atlas.mean_image.values[n] += contrib[p].image.values[n];
        }
    }
    if (members.size() > 1) {
        for (double &v : atlas.mean_image.values) {
            v /= static_cast<double>(members.size());
        }
    }
    atlas.mean_signal = average_signals(signals);
    atlas.mean_model = fit_fields(atlas.mean_phase_fields, make_regressors(atlas.mean_signal));
    return atlas;
}

TransferResult transfer_to_new(const MeanAtlas &atlas, const ScalarVolume &new_image, const RegistrationConfig &inter) {
    validate(new_image);
    inter.validate();
    const Vec3 a = atlas.grid().extent();
    const Vec3 b = new_image.meta.extent();
    for (int axis = 0; axis < 3; ++axis) {
        const double ratio = b[axis] / a[axis];
        if (ratio < 0.5 || ratio > 2.0) {
            throw GridMismatch("transfer: field of view of the new image differs from the atlas by more than 2x");
        }
    }
    const GridMeta &target = new_image.meta;
    const ScalarVolume mean_image = resample_volume(atlas.mean_image, target);

    TransferResult result;
    result.atlas_to_new = register_volumes(new_image, mean_image, inter).field;
    const FieldInverse inv = invert_field(result.atlas_to_new);
    for (const auto &phi : atlas.mean_phase_fields) {
        result.phase_fields.push_back(conjugate(resample_field(phi, target), result.atlas_to_new, inv.field));
    }
    result.model = fit_fields(result.phase_fields, make_regressors(atlas.mean_signal), &result.fit);
    return result;
}

void save_atlas(const fs::path &dir, const MeanAtlas &atlas) {
    fs::create_directories(dir);
    rvf::write(dir / "mean_image.rvf", atlas.mean_image);
    json phases = json::array();
    for (std::size_t j = 0; j < atlas.mean_phase_fields.size(); ++j) {
        rvf::write(dir / indexed("phase", j), atlas.mean_phase_fields[j]);
        phases.push_back(indexed("phase", j));
    }
    write_signal_csv(dir / "signal.csv", atlas.mean_signal);
    save_model(dir / "model", atlas.mean_model);
    write_json(dir / "atlas.json", {
                                       {"schema", "atlas-1"},
                                       {"ref_patient_id", atlas.ref_patient_id},
                                       {"ref_phase_index", atlas.ref_phase},
                                       {"mean_image", "mean_image.rvf"},
                                       {"phase_fields", phases},
                                       {"signal", "signal.csv"},
                                       {"model", "model"},
                                       {"masks", save_masks(dir, atlas.reference_masks)},
                                   });
}

MeanAtlas load_atlas(const fs::path &dir) {
    const json doc = read_json(dir / "atlas.json");
    MeanAtlas atlas;
    try {
        if (doc.at("schema").get<std::string>() != "atlas-1") {
            throw IoError("unsupported atlas schema in " + (dir / "atlas.json").string());
        }
        atlas.ref_patient_id = doc.at("ref_patient_id").get<std::string>();
        atlas.ref_phase = doc.at("ref_phase_index").get<std::size_t>();
        atlas.mean_image = rvf::read_scalar(dir / doc.at("mean_image").get<std::string>());
        for (const auto &f : doc.at("phase_fields")) {
            atlas.mean_phase_fields.push_back(rvf::read_field(dir / f.get<std::string>()));
        }
        atlas.mean_signal = read_signal_csv(dir / doc.at("signal").get<std::string>());
        atlas.mean_model = load_model(dir / doc.at("model").get<std::string>());
        atlas.reference_masks = load_masks(dir, doc.at("masks"));
    } catch (const json::exception &e) {
        throw IoError("malformed atlas manifest in " + dir.string() + ": " + e.what());
    }
    if (atlas.mean_signal.size() != atlas.mean_phase_fields.size()) {
        throw ShapeMismatch("atlas signal length differs from its phase count");
    }
    return atlas;
}

void save_motion_set(const fs::path &dir, const PatientMotionSet &patient) {
    fs::create_directories(dir / "fields");
    json fields = json::array();
    for (std::size_t j = 0; j < patient.phase_fields.size(); ++j) {
        const std::string file = "fields/" + indexed("phase", j);
        rvf::write(dir / file, patient.phase_fields[j]);
        fields.push_back(file);
    }
    rvf::write(dir / "ref_image.rvf", patient.ref_image);
    write_signal_csv(dir / "signal.csv", patient.signal);
    write_json(dir / "fit.json", {
                                     {"schema", "fit-1"},
                                     {"patient_id", patient.patient_id},
                                     {"ref_phase_index", patient.ref_phase},
                                     {"ref_image", "ref_image.rvf"},
                                     {"phase_fields", fields},
                                     {"signal", "signal.csv"},
                                     {"masks", save_masks(dir, patient.masks)},
                                 });
}

PatientMotionSet load_motion_set(const fs::path &dir) {
    const json doc = read_json(dir / "fit.json");
    PatientMotionSet p;
    try {
        if (doc.at("schema").get<std::string>() != "fit-1") {
            throw IoError("unsupported fit schema in " + (dir / "fit.json").string());
        }
        p.patient_id = doc.at("patient_id").get<std::string>();
        p.ref_phase = doc.at("ref_phase_index").get<std::size_t>();
        p.ref_image = rvf::read_scalar(dir / doc.at("ref_image").get<std::string>());
        for (const auto &f : doc.at("phase_fields")) {
            p.phase_fields.push_back(rvf::read_field(dir / f.get<std::string>()));
        }
        p.signal = read_signal_csv(dir / doc.at("signal").get<std::string>());
        p.masks = load_masks(dir, doc.at("masks"));
    } catch (const json::exception &e) {
        throw IoError("malformed fit manifest in " + dir.string() + ": " + e.what());
    }
    p.validate();
    return p;
}

} // namespace respmodel
