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

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "json.hpp"
#include "respmodel/atlas.h"
#include "respmodel/phantom.h"
#include "respmodel/pipeline.h"
#include "respmodel/rvf_io.h"

using namespace respmodel;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

PhantomConfig coarse_config() {
    PhantomConfig cfg;
    cfg.dims = {32, 32, 32};
    cfg.spacing = {4.0, 4.0, 4.0};
    return cfg;
}

struct Workspace {
    fs::path root = fs::temp_directory_path() / "respmodel_test_cli";
    Workspace() {
        fs::remove_all(root);
        fs::create_directories(root);
    }
    ~Workspace() { fs::remove_all(root); }
};

} // namespace

TEST_CASE("usage errors") {
    CHECK(cli({}).code == 4);
    CHECK(cli({"bogus"}).code == 4);
    CHECK(cli({"fit"}).code == 4);
    CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("missing input is an io error naming the path") {
    Workspace ws;
    const std::string missing = (ws.root / "nowhere" / "manifest.json").string();
    const Run r = cli({"fit", missing, "--out", (ws.root / "fit").string(), "--resolution", "32"});
    CHECK(r.code == 2);
    CHECK(r.err.find(missing) != std::string::npos);

    const Run c = cli({"phantom", "--config", (ws.root / "none.json").string()});
    CHECK(c.code == 2);
}

TEST_CASE("invalid resolution is a validation error") {
    Workspace ws;
    CHECK(cli({"phantom", "--out", ws.root.string(), "--resolution", "48"}).code == 4);
    CHECK(cli({"phantom", "--out", ws.root.string(), "--resolution", "16"}).code == 4);
}

TEST_CASE("phase count mismatch and grid mismatch are validation errors") {
    Workspace ws;
    const PhantomTruth a = generate(coarse_config());
    PhantomConfig short_cfg = coarse_config();
    short_cfg.n_phases = 8;
    PhantomTruth b = generate(short_cfg);
    PatientMotionSet pa = motion_set_from_fields(a.dataset, a.true_fields);
    PatientMotionSet pb = motion_set_from_fields(b.dataset, b.true_fields);
    pa.patient_id = "A";
    pb.patient_id = "B";
    save_motion_set(ws.root / "A", pa);
    save_motion_set(ws.root / "B", pb);

    const Run mixed = cli({"atlas", (ws.root / "A").string(), (ws.root / "B").string(), "--resolution", "32", "--out",
                           (ws.root / "atlas").string()});
    CHECK(mixed.code == 4);
    CHECK_FALSE(mixed.err.empty());

    const Run ok = cli({"atlas", (ws.root / "A").string(), "--resolution", "32", "--out", (ws.root / "atlas").string()});
    REQUIRE(ok.code == 0);
    CHECK(fs::exists(ws.root / "atlas" / "atlas.json"));

    GridMeta tiny;
    tiny.dims = {32, 32, 32};
    tiny.spacing = {1.0, 1.0, 1.0};
    rvf::write(ws.root / "tiny.rvf", ScalarVolume(tiny, 0.5));
    const Run far = cli({"transfer", (ws.root / "atlas").string(), (ws.root / "tiny.rvf").string(), "--resolution",
                         "32", "--out", (ws.root / "t").string()});
    CHECK(far.code == 4);
}

TEST_CASE("zero-motion phantom fits a zero model") {
    Workspace ws;
    PhantomConfig cfg = coarse_config();
    for (auto &o : cfg.organs) {
        o.peak = {};
    }
    cfg.hysteresis = 0.0;
    const fs::path manifest = save_phantom(ws.root / "still", generate(cfg));
    const Run r = cli({"fit", manifest.string(), "--resolution", "32", "--out", (ws.root / "fit").string()});
    REQUIRE(r.code == 0);
    const json report = json::parse(slurp(ws.root / "fit" / "fit_report.json"));
    for (const auto &p : report.at("phases")) {
        CHECK(p.at("max_norm_mm").get<double>() < 0.05);
    }

    const Run anim = cli({"animate", (ws.root / "fit" / "model").string(), (ws.root / "still" / "phase_00.rvf").string(),
                          "--simulate", "--seed", "7", "--frames", "3", "--resolution", "32", "--out",
                          (ws.root / "frames").string()});
    REQUIRE(anim.code == 0);
    const ScalarVolume ref = rvf::read_scalar(ws.root / "still" / "phase_00.rvf");
    for (const char *f : {"frame_0000.rvf", "frame_0002.rvf"}) {
        const ScalarVolume frame = rvf::read_scalar(ws.root / "frames" / f);
        double worst = 0.0;
        for (std::size_t n = 0; n < frame.values.size(); ++n) {
            worst = std::max(worst, std::abs(frame.values[n] - ref.values[n]));
        }
        CHECK(worst < 0.01);
    }
}

TEST_CASE("seeded animation is reproducible") {
    Workspace ws;
    PhantomConfig cfg = coarse_config();
    cfg.set_amplitude(3.0);
    const PhantomTruth t = generate(cfg);
    save_model(ws.root / "model", fit_patient_model(motion_set_from_fields(t.dataset, t.true_fields)));
    rvf::write(ws.root / "ref.rvf", t.dataset.ref_image());

    auto run = [&](const std::string &seed, const std::string &dir) {
        return cli({"animate", (ws.root / "model").string(), (ws.root / "ref.rvf").string(), "--simulate", "--seed",
                    seed, "--frames", "6", "--resolution", "32", "--out", (ws.root / dir).string()})
            .code;
    };
    REQUIRE(run("7", "a") == 0);
    REQUIRE(run("7", "b") == 0);
    REQUIRE(run("8", "c") == 0);
    CHECK(slurp(ws.root / "a" / "signal.csv") == slurp(ws.root / "b" / "signal.csv"));
    CHECK(slurp(ws.root / "a" / "signal.csv") != slurp(ws.root / "c" / "signal.csv"));
    for (int i = 0; i < 6; ++i) {
        const std::string f = "frame_000" + std::to_string(i) + ".raw";
        CHECK(slurp(ws.root / "a" / f) == slurp(ws.root / "b" / f));
    }
    CHECK(cli({"animate", (ws.root / "model").string(), (ws.root / "ref.rvf").string(), "--resolution", "32", "--out",
               (ws.root / "d").string()})
              .code == 4);
}

TEST_CASE("command-line flags override the config file") {
    Workspace ws;
    json doc = {{"resolution", 64},
                {"seed", 5},
                {"out", "from_config"},
                {"population", json::array({{{"id", "Q1"}, {"amplitude", 2.0}},
                                            {{"id", "Q2"}, {"amplitude", 3.0}, {"scale", 1.05}}})}};
    {
        std::ofstream out(ws.root / "cfg.json");
        out << doc.dump();
    }
    const PipelineConfig parsed = pipeline_config_from_json(doc, ws.root);
    CHECK(parsed.resolution == 64);
    CHECK(parsed.out == ws.root / "from_config");
    CHECK(parsed.intra.weight == RegistrationConfig::intra_patient().weight);

    const Run r = cli({"phantom", "--config", (ws.root / "cfg.json").string(), "--resolution", "32"});
    REQUIRE(r.code == 0);
    const json pop = json::parse(slurp(ws.root / "from_config" / "population.json"));
    CHECK(pop.at("seed") == 5);
    CHECK(pop.at("patients").size() == 2);
    const Dataset4D q2 = load_dataset(ws.root / "from_config" / "Q2" / "manifest.json");
    CHECK(q2.grid().dims == Dims{32, 32, 32});
    CHECK(q2.grid().extent().x == doctest::Approx(128.0));
    CHECK(fs::exists(ws.root / "from_config" / "Q2" / "truth" / "truth.json"));

    const Run o = cli({"phantom", "--config", (ws.root / "cfg.json").string(), "--resolution", "32", "--seed", "9",
                       "--out", (ws.root / "flag").string()});
    REQUIRE(o.code == 0);
    CHECK(json::parse(slurp(ws.root / "flag" / "population.json")).at("seed") == 9);

    json overlay = {{"inter", {{"weight", 2.5}}}};
    CHECK(pipeline_config_from_json(overlay).inter.weight == 2.5);
    CHECK(pipeline_config_from_json(overlay).inter.metric == RegistrationConfig::inter_patient().metric);
    CHECK_THROWS_AS(pipeline_config_from_json(json{{"resolution", "big"}}), InvalidConfig);
}
