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

#include "respmodel/dataset.h"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "json.hpp"
#include "respmodel/field_ops.h"
#include "respmodel/rvf_io.h"

namespace respmodel {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string phase_name(std::size_t j) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "phase_%02zu.rvf", j);
    return buf;
}

} // namespace

void Dataset4D::validate() const {
    if (phases.empty()) {
        throw EmptyList("dataset " + patient_id + " has no phases");
    }
    if (ref_phase >= phases.size()) {
        throw IndexOutOfRange("dataset " + patient_id + ": reference phase " + std::to_string(ref_phase) +
                              " outside " + std::to_string(phases.size()) + " phases");
    }
    for (const auto &p : phases) {
        require_same_grid(grid(), p.meta, "dataset phases");
        respmodel::validate(p);
    }
    for (const auto &[name, mask] : masks) {
        require_same_grid(grid(), mask.meta, ("dataset mask " + name).c_str());
    }
    if (signal.size() != phases.size()) {
        throw ShapeMismatch("dataset " + patient_id + ": signal has " + std::to_string(signal.size()) +
                            " samples for " + std::to_string(phases.size()) + " phases");
    }
    respmodel::validate(signal);
}

std::optional<MaskVolume> sliding_mask_for(const Dataset4D &data) {
    if (auto it = data.masks.find("sliding"); it != data.masks.end()) {
        return it->second;
    }
    std::optional<MaskVolume> out;
    for (const auto &[name, mask] : data.masks) {
        if (name == "body") {
            continue;
        }
        if (!out) {
            out = mask;
            continue;
        }
        for (std::size_t n = 0; n < mask.labels.size(); ++n) {
            out->labels[n] = static_cast<std::uint8_t>(out->labels[n] | mask.labels[n]);
        }
    }
    return out;
}

Dataset4D resample_dataset(const Dataset4D &data, const GridMeta &target) {
    if (data.grid().same_grid(target)) {
        return data;
    }
    Dataset4D out = data;
    for (auto &p : out.phases) {
        p = resample_volume(p, target);
    }
    for (auto &[name, mask] : out.masks) {
        mask = resample_mask(mask, target);
    }
    return out;
}

Dataset4D load_dataset(const fs::path &manifest) {
    std::ifstream in(manifest);
    if (!in) {
        throw IoError("cannot open manifest: " + manifest.string());
    }
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception &e) {
        throw IoError("malformed manifest " + manifest.string() + ": " + e.what());
    }
    const fs::path base = manifest.parent_path();
    Dataset4D data;
    std::vector<std::pair<int, fs::path>> phase_files;
    fs::path signal_file;
    try {
        if (doc.at("schema").get<std::string>() != "ds4d-1") {
            throw IoError("unsupported manifest schema in " + manifest.string());
        }
        data.patient_id = doc.at("patient_id").get<std::string>();
        data.ref_phase = doc.at("ref_phase_index").get<std::size_t>();
        for (const auto &p : doc.at("phases")) {
            phase_files.emplace_back(p.at("index").get<int>(), base / p.at("image").get<std::string>());
        }
        signal_file = base / doc.at("signal").get<std::string>();
        if (doc.contains("masks")) {
            for (const auto &[name, path] : doc.at("masks").items()) {
                data.masks[name] = rvf::read_mask(base / path.get<std::string>());
            }
        }
    } catch (const json::exception &e) {
        throw IoError("malformed manifest " + manifest.string() + ": " + e.what());
    }
    std::sort(phase_files.begin(), phase_files.end());
    for (std::size_t j = 0; j < phase_files.size(); ++j) {
        if (phase_files[j].first != static_cast<int>(j)) {
            throw ValidationError(manifest.string() + ": phase indices must be 0..N-1 without gaps");
        }
        data.phases.push_back(rvf::read_scalar(phase_files[j].second));
    }
    data.signal = read_signal_csv(signal_file);
    data.validate();
    return data;
}

fs::path save_dataset(const fs::path &dir, const Dataset4D &data) {
    fs::create_directories(dir);
    json phases = json::array();
    for (std::size_t j = 0; j < data.phases.size(); ++j) {
        rvf::write(dir / phase_name(j), data.phases[j]);
        phases.push_back({{"index", j}, {"image", phase_name(j)}});
    }
    write_signal_csv(dir / "signal.csv", data.signal);
    json masks = json::object();
    for (const auto &[name, mask] : data.masks) {
        const std::string file = "mask_" + name + ".rvf";
        rvf::write(dir / file, mask);
        masks[name] = file;
    }
    const json doc = {
        {"schema", "ds4d-1"},
        {"patient_id", data.patient_id},
        {"ref_phase_index", data.ref_phase},
        {"phases", phases},
        {"signal", "signal.csv"},
        {"masks", masks},
    };
    const fs::path manifest = dir / "manifest.json";
    std::ofstream out(manifest, std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + manifest.string());
    }
    out << doc.dump(2) << "\n";
    return manifest;
}

} // namespace respmodel
