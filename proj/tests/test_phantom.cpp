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
#include <cmath>

#include "respmodel/errors.h"
#include "respmodel/evaluation.h"
#include "respmodel/field_ops.h"
#include "respmodel/phantom.h"
#include "test_util.h"

using namespace respmodel;
using namespace testutil;

namespace {

PhantomConfig small_config() {
    PhantomConfig cfg;
    cfg.dims = {48, 48, 48};
    cfg.spacing = {2.5, 2.5, 2.5};
    return cfg;
}

std::size_t peak_phase(const SurrogateSignal &s) {
    return static_cast<std::size_t>(std::max_element(s.v.begin(), s.v.end()) - s.v.begin());
}

double max_image_difference(const ScalarVolume &a, const ScalarVolume &b) {
    double worst = 0.0;
    for (std::size_t n = 0; n < a.values.size(); ++n) {
        worst = std::max(worst, std::abs(a.values[n] - b.values[n]));
    }
    return worst;
}

Vec3 organ_center(const PhantomConfig &cfg, const std::string &name) {
    GridMeta m;
    m.dims = cfg.dims;
    m.spacing = cfg.spacing;
    for (const auto &o : cfg.organs) {
        if (o.name == name) {
            return m.center() + o.shape.center;
        }
    }
    return {};
}

} // namespace

TEST_CASE("generate: zero motion") {
    PhantomConfig cfg = small_config();
    for (auto &o : cfg.organs) {
        o.peak = {};
    }
    cfg.hysteresis = 0.0;
    const PhantomTruth t = generate(cfg);
    REQUIRE(t.dataset.phases.size() == 10);
    for (std::size_t j = 0; j < 10; ++j) {
        CHECK(t.dataset.phases[j].values == t.dataset.ref_image().values);
        CHECK(t.true_fields[j].max_abs() == 0.0);
    }
}

TEST_CASE("generate: motion law") {
    PhantomConfig cfg = small_config();
    cfg.hysteresis = 0.0;
    cfg.set_amplitude(4.0);
    const PhantomTruth t = generate(cfg);
    const SurrogateSignal &s = t.dataset.signal;
    CHECK(t.dataset.ref_phase == 0);
    CHECK(t.true_fields[0].max_abs() == 0.0);

    SUBCASE("peak magnitude at the liver center") {
        const std::size_t jp = peak_phase(s);
        CHECK(s.v[jp] == doctest::Approx(1000.0));
        const Vec3 u = phantom_displacement(cfg, organ_center(cfg, "liver"), jp);
        CHECK(norm(u) == doctest::Approx(4.0).epsilon(1e-9));
    }
    SUBCASE("equal volume gives equal images without hysteresis") {
        // sin^2 over one period: phases j and n - j share a volume
        CHECK(s.v[4] == doctest::Approx(s.v[6]));
        CHECK(max_image_difference(t.dataset.phases[4], t.dataset.phases[6]) < 1e-9);
    }
    SUBCASE("hysteresis separates inhale from exhale") {
        PhantomConfig h = cfg;
        h.hysteresis = 0.003;
        const PhantomTruth th = generate(h);
        CHECK(max_image_difference(th.dataset.phases[4], th.dataset.phases[6]) > 1e-3);
    }
}

TEST_CASE("generate: analytic consistency") {
    const PhantomTruth t = generate(small_config());
    const ScalarVolume &ref = t.dataset.ref_image();
    const auto [lo, hi] = std::minmax_element(ref.values.begin(), ref.values.end());
    const double range = *hi - *lo;
    for (std::size_t j = 0; j < t.dataset.phases.size(); ++j) {
        const ScalarVolume w = warp_image(ref, t.true_fields[j]);
        double sum = 0.0;
        for (std::size_t n = 0; n < w.values.size(); ++n) {
            sum += std::abs(w.values[n] - t.dataset.phases[j].values[n]);
        }
        CHECK(sum / static_cast<double>(w.values.size()) < 1e-3 * range);
    }
}

TEST_CASE("generate: phase masks match the warped reference masks") {
    // default 64^3 grid; thresholded trilinear warping loses sub-half-voxel boundary shifts
    const PhantomTruth t = generate(PhantomConfig{});
    for (std::size_t j = 0; j < t.dataset.phases.size(); ++j) {
        for (const auto &[name, mask] : t.true_masks[j]) {
            INFO("phase " << j << " " << name);
            CHECK(dice(warp_mask(t.dataset.masks.at(name), t.true_fields[j]), mask) >= 0.98);
        }
    }
}

TEST_CASE("generate: organs stay inside and peak below 10% of the extent") {
    const PhantomConfig cfg = small_config();
    const PhantomTruth t = generate(cfg);
    const double limit = 0.1 * 48 * 2.5;
    for (const auto &f : t.true_fields) {
        CHECK(f.max_abs() <= limit);
    }
    for (const auto &masks : t.true_masks) {
        const MaskVolume &liver = masks.at("liver");
        const GridMeta &m = liver.meta;
        bool on_border = false;
        for_each_voxel(m, [&](int i, int j, int k, std::size_t n) {
            const bool border = i == 0 || j == 0 || k == 0 || i == m.dims[0] - 1 || j == m.dims[1] - 1 ||
                                k == m.dims[2] - 1;
            on_border = on_border || (border && liver.labels[n] != 0);
        });
        CHECK_FALSE(on_border);
    }
}

TEST_CASE("generate: determinism and errors") {
    PhantomConfig cfg = small_config();
    cfg.seed = 3;
    const PhantomTruth a = generate(cfg);
    const PhantomTruth b = generate(cfg);
    for (std::size_t j = 0; j < a.dataset.phases.size(); ++j) {
        CHECK(a.dataset.phases[j].values == b.dataset.phases[j].values);
        CHECK(a.true_fields[j].u == b.true_fields[j].u);
    }
    CHECK(a.dataset.signal.v == b.dataset.signal.v);

    PhantomConfig bad = small_config();
    bad.organs[0].peak = {0.0, 0.0, 20.0};
    CHECK_THROWS_AS(generate(bad), InvalidConfig);
    bad = small_config();
    bad.n_phases = 1;
    CHECK_THROWS_AS(generate(bad), InvalidConfig);
    bad = small_config();
    bad.signal_amp = 1500.0;
    CHECK_THROWS_AS(generate(bad), InvalidConfig);
    bad = small_config();
    bad.organs[0].shape.center = {40.0, 0.0, 0.0};
    CHECK_THROWS_AS(generate(bad), InvalidConfig);
}

TEST_CASE("perturb_patient") {
    PhantomConfig cfg = small_config();
    cfg.set_amplitude(3.0);
    const PhantomTruth t = generate(cfg);

    SUBCASE("identity") {
        const PhantomTruth same = perturb_patient(t, Perturbation{});
        for (std::size_t j = 0; j < t.dataset.phases.size(); ++j) {
            CHECK(same.dataset.phases[j].values == t.dataset.phases[j].values);
            CHECK(same.true_fields[j].u == t.true_fields[j].u);
        }
    }
    SUBCASE("translation by whole voxels shifts images and keeps field magnitudes") {
        const PhantomTruth moved = perturb_patient(t, Perturbation{{5.0, 0.0, -2.5}, 1.0});
        const GridMeta &m = t.dataset.grid();
        double img = 0.0;
        double fld = 0.0;
        for_each_voxel(m, [&](int i, int j, int k, std::size_t n) {
            if (i + 2 >= m.dims[0] || k < 1) {
                return;
            }
            const std::size_t s = m.index(i + 2, j, k - 1);
            img = std::max(img, std::abs(moved.dataset.phases[5].values[s] - t.dataset.phases[5].values[n]));
            fld = std::max(fld, max_abs(moved.true_fields[5].u[s] - t.true_fields[5].u[n]));
        });
        CHECK(img < 1e-9);
        CHECK(fld < 1e-9);
        for (std::size_t j = 0; j < t.true_fields.size(); ++j) {
            CHECK(moved.true_fields[j].max_abs() == doctest::Approx(t.true_fields[j].max_abs()).epsilon(1e-6));
        }
    }
    SUBCASE("scale multiplies the peak displacement") {
        const PhantomTruth big = perturb_patient(t, Perturbation{{}, 1.1});
        const std::size_t jp = peak_phase(t.dataset.signal);
        // the scaled field is sampled on a different lattice; compare analytic peaks at the organ center
        const GridMeta &m = t.dataset.grid();
        const Vec3 c = organ_center(cfg, "liver");
        const Vec3 scaled_c = m.center() + (c - m.center()) * 1.1;
        const DisplacementField &f = big.true_fields[jp];
        CHECK(norm(sample_trilinear(f, scaled_c)) ==
              doctest::Approx(1.1 * norm(phantom_displacement(cfg, c, jp))).epsilon(0.02));
        CHECK(big.anatomy.scale == doctest::Approx(1.1));
    }
    SUBCASE("out of grid") {
        CHECK_THROWS_AS(perturb_patient(t, Perturbation{{40.0, 0.0, 0.0}, 1.0}), OutOfGrid);
        CHECK_THROWS_AS(perturb_patient(t, Perturbation{{}, 2.0}), OutOfGrid);
    }
}

TEST_CASE("default population") {
    const std::vector<PopulationMember> pop = default_population();
    REQUIRE(pop.size() == 4);
    for (const auto &p : pop) {
        CHECK(p.amplitude >= 2.0);
        CHECK(p.amplitude <= 4.0);
        CHECK(std::abs(p.perturbation.scale - 1.0) <= 0.1 + 1e-12);
        CHECK(max_abs(p.perturbation.translation) <= 2.0);
    }
}
