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

#include <algorithm>
#include <filesystem>

#include "respmodel/atlas.h"
#include "respmodel/errors.h"
#include "respmodel/field_ops.h"
#include "respmodel/phantom.h"
#include "test_util.h"

using namespace respmodel;
using namespace testutil;
namespace fs = std::filesystem;

namespace {

PhantomConfig coarse_config(double amplitude) {
    PhantomConfig cfg;
    cfg.dims = {32, 32, 32};
    cfg.spacing = {4.0, 4.0, 4.0};
    cfg.set_amplitude(amplitude);
    return cfg;
}

PatientMotionSet truth_set(const PhantomTruth &t, const std::string &id) {
    PatientMotionSet p = motion_set_from_fields(t.dataset, t.true_fields);
    p.patient_id = id;
    return p;
}

std::size_t peak_phase(const SurrogateSignal &s) {
    return static_cast<std::size_t>(std::max_element(s.v.begin(), s.v.end()) - s.v.begin());
}

double mean_abs_inside(const DisplacementField &f, const MaskVolume &mask, const Vec3 &expect) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t n = 0; n < f.u.size(); ++n) {
        if (mask.labels[n] != 0) {
            sum += norm(f.u[n] - expect);
            ++count;
        }
    }
    return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

} // namespace

TEST_CASE("transport_field") {
    const GridMeta m = cube(24, 2.0);
    const DisplacementField phi = sine_field(m, 2.0, 0.3);

    SUBCASE("identity inter-patient field leaves motion unchanged") {
        CHECK(max_abs_difference(transport_field(phi, DisplacementField(m)), phi) <= 1e-6);
    }
    SUBCASE("identity motion stays identity") {
        // voxels whose 2 mm excursion can leave the grid hit clamp-to-edge sampling
        const DisplacementField out = transport_field(DisplacementField(m), sine_field(m, 2.0, 1.0));
        double worst = 0.0;
        for_each_voxel(m, [&](int i, int j, int k, std::size_t n) {
            const int edge = std::min({i, j, k, m.dims[0] - 1 - i, m.dims[1] - 1 - j, m.dims[2] - 1 - k});
            if (edge >= 2) {
                worst = std::max(worst, max_abs(out.u[n]));
            }
        });
        CHECK(worst < 0.1);
    }
    SUBCASE("constant fields commute") {
        const DisplacementField out = transport_field(DisplacementField(m, {1.0, -2.0, 0.5}),
                                                      DisplacementField(m, {3.0, 0.0, -1.0}));
        for (const Vec3 &u : out.u) {
            CHECK(max_abs(u - Vec3{1.0, -2.0, 0.5}) < 1e-3);
        }
    }
    SUBCASE("translation conjugation shifts the motion field") {
        // u'(x) = u(x + t); t is a whole number of voxels
        const Vec3 t{4.0, 0.0, -2.0};
        const DisplacementField out = transport_field(phi, DisplacementField(m, t));
        double worst = 0.0;
        for_each_voxel(m, [&](int i, int j, int k, std::size_t n) {
            if (i + 2 >= m.dims[0] || k < 1) {
                return;
            }
            worst = std::max(worst, max_abs(out.u[n] - phi.u[m.index(i + 2, j, k - 1)]));
        });
        CHECK(worst < 1e-3);
    }
}

TEST_CASE("average_fields") {
    const GridMeta m = cube(6);
    const DisplacementField a = random_field(m, 2.0, 1);
    const DisplacementField b = random_field(m, 2.0, 2);

    CHECK(max_abs_difference(average_fields(std::vector{a}), a) == 0.0);
    const DisplacementField avg = average_fields(std::vector{a, b});
    for (std::size_t n = 0; n < avg.u.size(); ++n) {
        CHECK(max_abs(avg.u[n] - (a.u[n] + b.u[n]) * 0.5) < 1e-12);
    }
    // order does not matter and copies change nothing
    CHECK(max_abs_difference(average_fields(std::vector{b, a}), avg) < 1e-12);
    CHECK(max_abs_difference(average_fields(std::vector{a, a, a}), a) < 1e-12);
    const DisplacementField c(m, {1.0, 2.0, 3.0});
    const DisplacementField d(m, {3.0, 2.0, 1.0});
    for (const Vec3 &u : average_fields(std::vector{c, d}).u) {
        CHECK(max_abs(u - Vec3{2.0, 2.0, 2.0}) == 0.0);
    }
    CHECK_THROWS_AS(average_fields(std::vector<DisplacementField>{}), EmptyList);
    CHECK_THROWS_AS(average_fields(std::vector{a, DisplacementField(cube(5))}), GridMismatch);
}

TEST_CASE("build_mean_atlas") {
    const RegistrationConfig inter = RegistrationConfig::inter_patient();
    const PhantomTruth base = generate(coarse_config(3.0));

    SUBCASE("population of one reproduces the patient") {
        const std::vector<PatientMotionSet> pop{truth_set(base, "A")};
        const MeanAtlas atlas = build_mean_atlas(pop, "A", inter);
        for (std::size_t j = 0; j < base.true_fields.size(); ++j) {
            CHECK(max_abs_difference(atlas.mean_phase_fields[j], base.true_fields[j]) < 1e-9);
        }
        CHECK(atlas.mean_image.values == base.dataset.ref_image().values);
    }
    SUBCASE("copies of one patient reproduce its model") {
        const std::vector<PatientMotionSet> pop{truth_set(base, "A"), truth_set(base, "B"), truth_set(base, "C")};
        const MeanAtlas atlas = build_mean_atlas(pop, "B", inter);
        CHECK(atlas.ref_patient_id == "B");
        for (std::size_t j = 0; j < base.true_fields.size(); ++j) {
            CHECK(max_abs_difference(atlas.mean_phase_fields[j], base.true_fields[j]) < 1e-3);
        }
        const MotionModel own = fit_patient_model(pop[0]);
        const SurrogateSignal &s = base.dataset.signal;
        for (std::size_t j = 0; j < s.size(); ++j) {
            CHECK(max_abs_difference(predict(atlas.mean_model, s.v[j], s.v_prime[j]),
                                     predict(own, s.v[j], s.v_prime[j])) < 1e-3);
        }
    }
    SUBCASE("amplitudes 2 and 4 average to 3") {
        const PhantomTruth low = generate(coarse_config(2.0));
        const PhantomTruth high = generate(coarse_config(4.0));
        const std::vector<PatientMotionSet> pop{truth_set(low, "L"), truth_set(high, "H")};
        const MeanAtlas atlas = build_mean_atlas(pop, "L", inter);
        const std::size_t jp = peak_phase(atlas.mean_signal);
        const GridMeta &m = atlas.grid();
        const Vec3 liver = m.center() + PhantomConfig::default_organs()[0].shape.center;
        CHECK(norm(sample_trilinear(atlas.mean_phase_fields[jp], liver)) == doctest::Approx(3.0).epsilon(0.1));
        CHECK(atlas.mean_phase_fields[atlas.ref_phase].max_abs() < 1e-6);
    }
    SUBCASE("reference can be left out of the average") {
        const PhantomTruth high = generate(coarse_config(4.0));
        const std::vector<PatientMotionSet> pop{truth_set(base, "A"), truth_set(high, "H")};
        AtlasOptions opt;
        opt.include_reference = false;
        const MeanAtlas atlas = build_mean_atlas(pop, "H", inter, opt);
        for (std::size_t j = 0; j < base.true_fields.size(); ++j) {
            CHECK(max_abs_difference(atlas.mean_phase_fields[j], base.true_fields[j]) < 1e-3);
        }
        CHECK_THROWS_AS(build_mean_atlas(std::vector{truth_set(base, "A")}, "A", inter, opt), EmptyList);
    }
    SUBCASE("errors") {
        PhantomConfig short_cfg = coarse_config(3.0);
        short_cfg.n_phases = 8;
        const std::vector<PatientMotionSet> pop{truth_set(base, "A"), truth_set(generate(short_cfg), "B")};
        CHECK_THROWS_AS(build_mean_atlas(pop, "A", inter), InconsistentPhaseCount);
        CHECK_THROWS_AS(build_mean_atlas(pop, "Z", inter), ValidationError);
        CHECK_THROWS_AS(build_mean_atlas(std::vector<PatientMotionSet>{}, "A", inter), EmptyList);
    }
}

TEST_CASE("transfer_to_new") {
    const RegistrationConfig inter = RegistrationConfig::inter_patient();
    const PhantomTruth base = generate(coarse_config(3.0));
    const MeanAtlas atlas = build_mean_atlas(std::vector{truth_set(base, "A")}, "A", inter);

    SUBCASE("same image") {
        const TransferResult r = transfer_to_new(atlas, base.dataset.ref_image(), inter);
        CHECK(r.atlas_to_new.max_abs() < 0.1);
        const SurrogateSignal &s = atlas.mean_signal;
        for (std::size_t j = 0; j < s.size(); ++j) {
            CHECK(max_abs_difference(predict(r.model, s.v[j], s.v_prime[j]),
                                     predict(atlas.mean_model, s.v[j], s.v_prime[j])) < 0.1);
        }
    }
    SUBCASE("translated patient") {
        const Vec3 t{4.0, 0.0, -4.0};
        const PhantomTruth moved = perturb_patient(base, Perturbation{t, 1.0});
        const TransferResult r = transfer_to_new(atlas, moved.dataset.ref_image(), inter);
        // atlas(x + u) ~ new(x) = atlas(x - t)
        CHECK(mean_abs_inside(r.atlas_to_new, moved.dataset.masks.at("liver"), t * -1.0) < 0.5);
    }
    SUBCASE("translated copy predicts the same motion at translated locations") {
        // one voxel along x: new(x) = mean(x - t)
        const PhantomTruth moved = perturb_patient(base, Perturbation{{4.0, 0.0, 0.0}, 1.0});
        const TransferResult r = transfer_to_new(atlas, moved.dataset.ref_image(), inter);
        const SurrogateSignal &s = atlas.mean_signal;
        const std::size_t jp = peak_phase(s);
        const DisplacementField mine = predict(r.model, s.v[jp], s.v_prime[jp]);
        const DisplacementField theirs = predict(atlas.mean_model, s.v[jp], s.v_prime[jp]);
        const GridMeta &m = atlas.grid();
        const MaskVolume &liver = base.dataset.masks.at("liver");
        double worst = 0.0;
        for_each_voxel(m, [&](int i, int j, int k, std::size_t n) {
            if (liver.labels[n] != 0) {
                worst = std::max(worst, max_abs(mine.u[m.index(i + 1, j, k)] - theirs.u[n]));
            }
        });
        CHECK(worst < 0.3);
    }
    SUBCASE("animating at the reference phase leaves the image unchanged") {
        const PhantomTruth moved = perturb_patient(base, Perturbation{{-2.0, 3.0, 1.0}, 1.05});
        const ScalarVolume &img = moved.dataset.ref_image();
        const TransferResult r = transfer_to_new(atlas, img, inter);
        const ScalarVolume out = animate(img, r.model, atlas.mean_signal, atlas.ref_phase);
        const auto [lo, hi] = std::minmax_element(img.values.begin(), img.values.end());
        double sum = 0.0;
        for (std::size_t n = 0; n < img.values.size(); ++n) {
            sum += std::abs(out.values[n] - img.values[n]);
        }
        CHECK(sum / static_cast<double>(img.values.size()) < 0.01 * (*hi - *lo));
    }
    SUBCASE("field of view mismatch") {
        GridMeta small = cube(32, 1.5);
        CHECK_THROWS_AS(transfer_to_new(atlas, ScalarVolume(small, 0.5), inter), GridMismatch);
    }
    SUBCASE("other resolution is resampled") {
        const ScalarVolume fine = resample_volume(base.dataset.ref_image(), Dims{48, 48, 48});
        const TransferResult r = transfer_to_new(atlas, fine, inter);
        CHECK(r.model.grid().same_grid(fine.meta));
        CHECK(r.atlas_to_new.max_abs() < 1.0);
    }
}

TEST_CASE("atlas and fit directories round trip") {
    const fs::path dir = fs::temp_directory_path() / "respmodel_test_atlas";
    fs::remove_all(dir);
    const PhantomTruth base = generate(coarse_config(3.0));
    const PatientMotionSet p = truth_set(base, "A");

    save_motion_set(dir / "fit", p);
    const PatientMotionSet back = load_motion_set(dir / "fit");
    CHECK(back.patient_id == "A");
    CHECK(back.phase_fields.size() == p.phase_fields.size());
    CHECK(max_abs_difference(back.phase_fields[5], p.phase_fields[5]) < 1e-5);
    CHECK(back.signal.v == p.signal.v);
    CHECK(back.masks.count("liver") == 1);

    const MeanAtlas atlas = build_mean_atlas(std::vector{p}, "A", RegistrationConfig::inter_patient());
    save_atlas(dir / "atlas", atlas);
    const MeanAtlas loaded = load_atlas(dir / "atlas");
    CHECK(loaded.ref_patient_id == "A");
    CHECK(loaded.ref_phase == atlas.ref_phase);
    CHECK(loaded.mean_phase_fields.size() == atlas.mean_phase_fields.size());
    CHECK(max_abs_difference(loaded.mean_model.a3, atlas.mean_model.a3) < 1e-5);
    CHECK(loaded.reference_masks.at("liver").labels == atlas.reference_masks.at("liver").labels);
    CHECK_THROWS_AS(load_atlas(dir / "missing"), IoError);
    fs::remove_all(dir);
}
