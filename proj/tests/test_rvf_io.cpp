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

#include "doctest.h"

#include <cstring>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "respmodel/errors.h"
#include "respmodel/rvf_io.h"
#include "test_util.h"

using namespace respmodel;
using namespace testutil;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const char *name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

} // namespace

TEST_CASE("rvf round trips") {
    TempDir tmp("respmodel_test_rvf");
    GridMeta m;
    m.dims = {3, 4, 5};
    m.spacing = {0.5, 1.0, 2.5};
    m.origin = {-10.0, 0.25, 7.0};

    SUBCASE("scalar") {
        const ScalarVolume v = volume_from(m, [](const Vec3 &p) { return p.x * 0.5 + p.z; });
        rvf::write(tmp.path / "img.rvf", v);
        const ScalarVolume back = rvf::read_scalar(tmp.path / "img.rvf");
        CHECK(back.meta.same_grid(m));
        for (std::size_t n = 0; n < v.values.size(); ++n) {
            CHECK(back.values[n] == static_cast<double>(static_cast<float>(v.values[n])));
        }
        CHECK(fs::file_size(tmp.path / "img.raw") == 4 * m.voxel_count());
    }
    SUBCASE("field components are interleaved") {
        DisplacementField f(m);
        f.u[0] = {1.0, 2.0, 3.0};
        f.u[1] = {4.0, 5.0, 6.0};
        rvf::write(tmp.path / "f.rvf", f);
        std::ifstream raw(tmp.path / "f.raw", std::ios::binary);
        float head[6];
        raw.read(reinterpret_cast<char *>(head), sizeof(head));
        CHECK(head[0] == 1.0f);
        CHECK(head[1] == 2.0f);
        CHECK(head[2] == 3.0f);
        CHECK(head[3] == 4.0f);
        const DisplacementField back = rvf::read_field(tmp.path / "f.rvf");
        CHECK(back.u == f.u);
    }
    SUBCASE("mask") {
        const MaskVolume mask = mask_from(m, [](const Vec3 &p) { return p.y > 1.0; });
        rvf::write(tmp.path / "m.rvf", mask);
        CHECK(rvf::read_mask(tmp.path / "m.rvf").labels == mask.labels);
    }
    SUBCASE("sidecar content") {
        rvf::write(tmp.path / "img.rvf", ScalarVolume(m, 1.0));
        std::ifstream in(tmp.path / "img.rvf");
        const nlohmann::json doc = nlohmann::json::parse(in);
        CHECK(doc.at("schema") == "rvf-1");
        CHECK(doc.at("kind") == "scalar");
        CHECK(doc.at("dims") == nlohmann::json{3, 4, 5});
        CHECK(doc.at("dtype") == "f32");
        CHECK(doc.at("order") == "x-fastest");
        const rvf::Header h = rvf::read_header(tmp.path / "img.rvf");
        CHECK(h.kind == rvf::Kind::scalar);
    }
}

TEST_CASE("rvf errors") {
    TempDir tmp("respmodel_test_rvf_err");
    const GridMeta m = cube(4);
    CHECK_THROWS_AS(rvf::read_scalar(tmp.path / "missing.rvf"), IoError);

    rvf::write(tmp.path / "img.rvf", ScalarVolume(m, 1.0));
    CHECK_THROWS_AS(rvf::read_field(tmp.path / "img.rvf"), ValidationError);

    fs::resize_file(tmp.path / "img.raw", 10);
    CHECK_THROWS_AS(rvf::read_scalar(tmp.path / "img.rvf"), IoError);

    {
        std::ofstream bad(tmp.path / "bad.rvf");
        bad << "{ not json";
    }
    CHECK_THROWS_AS(rvf::read_scalar(tmp.path / "bad.rvf"), IoError);

    rvf::write(tmp.path / "s.rvf", ScalarVolume(m, 2.0));
    fs::copy_file(tmp.path / "s.raw", tmp.path / "m.raw");
    {
        nlohmann::json doc;
        std::ifstream in(tmp.path / "s.rvf");
        in >> doc;
        doc["kind"] = "mask";
        std::ofstream out(tmp.path / "m.rvf");
        out << doc.dump();
    }
    CHECK_THROWS_AS(rvf::read_mask(tmp.path / "m.rvf"), ValidationError);
}
