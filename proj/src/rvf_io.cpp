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

#include "respmodel/rvf_io.h"

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace respmodel::rvf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char *kind_name(Kind k) {
    switch (k) {
    case Kind::scalar: return "scalar";
    case Kind::field: return "field";
    case Kind::mask: return "mask";
    }
    return "scalar";
}

fs::path raw_path(const fs::path &sidecar) {
    fs::path p = sidecar;
    p.replace_extension(".raw");
    return p;
}

std::uint32_t to_little(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
    }
    return v;
}

void write_raw(const fs::path &path, const std::vector<float> &data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open for writing: " + path.string());
    }
    std::vector<std::uint32_t> words(data.size());
    for (std::size_t n = 0; n < data.size(); ++n) {
        std::uint32_t w;
        std::memcpy(&w, &data[n], sizeof(w));
        words[n] = to_little(w);
    }
    out.write(reinterpret_cast<const char *>(words.data()),
              static_cast<std::streamsize>(words.size() * sizeof(std::uint32_t)));
    if (!out) {
        throw IoError("write failed: " + path.string());
    }
}

std::vector<float> read_raw(const fs::path &path, std::size_t count) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open: " + path.string());
    }
    std::vector<std::uint32_t> words(count);
    in.read(reinterpret_cast<char *>(words.data()), static_cast<std::streamsize>(count * sizeof(std::uint32_t)));
    if (in.gcount() != static_cast<std::streamsize>(count * sizeof(std::uint32_t))) {
        throw IoError("truncated payload: " + path.string());
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        throw IoError("payload larger than declared grid: " + path.string());
    }
    std::vector<float> data(count);
    for (std::size_t n = 0; n < count; ++n) {
        const std::uint32_t w = to_little(words[n]);
        std::memcpy(&data[n], &w, sizeof(w));
    }
    return data;
}

void write_header(const fs::path &sidecar, Kind kind, const GridMeta &m) {
    const json doc = {
        {"schema", "rvf-1"},
        {"kind", kind_name(kind)},
        {"dims", {m.dims[0], m.dims[1], m.dims[2]}},
        {"spacing", {m.spacing.x, m.spacing.y, m.spacing.z}},
        {"origin", {m.origin.x, m.origin.y, m.origin.z}},
        {"dtype", "f32"},
        {"order", "x-fastest"},
    };
    if (sidecar.has_parent_path()) {
        fs::create_directories(sidecar.parent_path());
    }
    std::ofstream out(sidecar, std::ios::trunc);
    if (!out) {
        throw IoError("cannot open for writing: " + sidecar.string());
    }
    out << doc.dump(2) << "\n";
}

Header expect(const fs::path &sidecar, Kind kind) {
    Header h = read_header(sidecar);
    if (h.kind != kind) {
        throw ValidationError(sidecar.string() + ": expected kind '" + kind_name(kind) + "', found '" +
                              kind_name(h.kind) + "'");
    }
    return h;
}

} // namespace

Header read_header(const fs::path &sidecar) {
    std::ifstream in(sidecar);
    if (!in) {
        throw IoError("cannot open: " + sidecar.string());
    }
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception &e) {
        throw IoError("malformed RVF sidecar " + sidecar.string() + ": " + e.what());
    }
    try {
        if (doc.at("schema").get<std::string>() != "rvf-1") {
            throw IoError("unsupported schema in " + sidecar.string());
        }
        if (doc.at("dtype").get<std::string>() != "f32" || doc.at("order").get<std::string>() != "x-fastest") {
            throw IoError("unsupported dtype/order in " + sidecar.string());
        }
        Header h;
        const auto kind = doc.at("kind").get<std::string>();
        if (kind == "scalar") {
            h.kind = Kind::scalar;
        } else if (kind == "field") {
            h.kind = Kind::field;
        } else if (kind == "mask") {
            h.kind = Kind::mask;
        } else {
            throw IoError("unknown kind '" + kind + "' in " + sidecar.string());
        }
        for (int a = 0; a < 3; ++a) {
            h.meta.dims[a] = doc.at("dims").at(a).get<int>();
            h.meta.spacing[a] = doc.at("spacing").at(a).get<double>();
            h.meta.origin[a] = doc.at("origin").at(a).get<double>();
        }
        h.meta.validate();
        h.data_file = raw_path(sidecar);
        return h;
    } catch (const json::exception &e) {
        throw IoError("malformed RVF sidecar " + sidecar.string() + ": " + e.what());
    }
}

void write(const fs::path &sidecar, const ScalarVolume &vol) {
    write_header(sidecar, Kind::scalar, vol.meta);
    write_raw(raw_path(sidecar), std::vector<float>(vol.values.begin(), vol.values.end()));
}

void write(const fs::path &sidecar, const DisplacementField &field) {
    write_header(sidecar, Kind::field, field.meta);
    std::vector<float> data;
    data.reserve(field.u.size() * 3);
    for (const Vec3 &v : field.u) {
        data.push_back(static_cast<float>(v.x));
        data.push_back(static_cast<float>(v.y));
        data.push_back(static_cast<float>(v.z));
    }
    write_raw(raw_path(sidecar), data);
}

void write(const fs::path &sidecar, const MaskVolume &mask) {
    write_header(sidecar, Kind::mask, mask.meta);
    write_raw(raw_path(sidecar), std::vector<float>(mask.labels.begin(), mask.labels.end()));
}

ScalarVolume read_scalar(const fs::path &sidecar) {
    const Header h = expect(sidecar, Kind::scalar);
    const auto data = read_raw(h.data_file, h.meta.voxel_count());
    ScalarVolume vol(h.meta);
    std::copy(data.begin(), data.end(), vol.values.begin());
    validate(vol);
    return vol;
}

DisplacementField read_field(const fs::path &sidecar) {
    const Header h = expect(sidecar, Kind::field);
    const auto data = read_raw(h.data_file, h.meta.voxel_count() * 3);
    DisplacementField field(h.meta);
    for (std::size_t n = 0; n < field.u.size(); ++n) {
        field.u[n] = {data[3 * n], data[3 * n + 1], data[3 * n + 2]};
    }
    validate(field);
    return field;
}

MaskVolume read_mask(const fs::path &sidecar) {
    const Header h = expect(sidecar, Kind::mask);
    const auto data = read_raw(h.data_file, h.meta.voxel_count());
    MaskVolume mask(h.meta);
    for (std::size_t n = 0; n < data.size(); ++n) {
        if (data[n] != 0.0f && data[n] != 1.0f) {
            throw ValidationError(sidecar.string() + ": mask values must be 0 or 1");
        }
        mask.labels[n] = data[n] == 1.0f ? 1 : 0;
    }
    return mask;
}

} // namespace respmodel::rvf
