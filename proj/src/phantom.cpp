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

#include "respmodel/phantom.h"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <Eigen/Dense>

#include "respmodel/rvf_io.h"
#include "respmodel/surrogate.h"

namespace respmodel {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double normalized_radius(const Ellipsoid &e, const Vec3 &rel) {
    const double dx = (rel.x - e.center.x) / e.radii.x;
    const double dy = (rel.y - e.center.y) / e.radii.y;
    const double dz = (rel.z - e.center.z) / e.radii.z;
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// First-order signed distance to the surface, positive inside [mm].
double signed_distance(const Ellipsoid &e, const Vec3 &rel) {
    const double rho = normalized_radius(e, rel);
    if (rho < 1e-9) {
        return std::min({e.radii.x, e.radii.y, e.radii.z});
    }
    const double gx = (rel.x - e.center.x) / (e.radii.x * e.radii.x);
    const double gy = (rel.y - e.center.y) / (e.radii.y * e.radii.y);
    const double gz = (rel.z - e.center.z) / (e.radii.z * e.radii.z);
    const double grad = std::sqrt(gx * gx + gy * gy + gz * gz) / rho;
    return (1.0 - rho) / grad;
}

double bump(const Ellipsoid &e, const Vec3 &rel) {
    const double dx = (rel.x - e.center.x) / e.radii.x;
    const double dy = (rel.y - e.center.y) / e.radii.y;
    const double dz = (rel.z - e.center.z) / e.radii.z;
    return std::exp(-0.5 * (dx * dx + dy * dy + dz * dz));
}

// Blend weights: B(x) = sum_o peak_coef[o] g_o(x), H(x) = sum_o hyst_coef[o] g_o(x) * h.
struct MotionLaw {
    std::vector<Vec3> peak_coef;
    std::vector<double> hyst_coef;
    SurrogateSignal signal;
};

MotionLaw motion_law(const PhantomConfig &cfg) {
    const auto n = static_cast<Eigen::Index>(cfg.organs.size());
    MotionLaw law;
    if (n > 0) {
        Eigen::MatrixXd G(n, n);
        for (Eigen::Index a = 0; a < n; ++a) {
            for (Eigen::Index b = 0; b < n; ++b) {
                G(a, b) = bump(cfg.organs[static_cast<std::size_t>(b)].shape,
                               cfg.organs[static_cast<std::size_t>(a)].shape.center);
            }
        }
        Eigen::MatrixXd rhs(n, 4);
        for (Eigen::Index a = 0; a < n; ++a) {
            const Vec3 &p = cfg.organs[static_cast<std::size_t>(a)].peak;
            rhs.row(a) << p.x, p.y, p.z, 1.0;
        }
        const Eigen::MatrixXd coef = G.partialPivLu().solve(rhs);
        for (Eigen::Index a = 0; a < n; ++a) {
            law.peak_coef.push_back({coef(a, 0), coef(a, 1), coef(a, 2)});
            law.hyst_coef.push_back(coef(a, 3));
        }
    }
    SignalSimConfig sim;
    sim.amp_range = {0.0, cfg.signal_amp};
    sim.period_mean = static_cast<double>(cfg.n_phases);
    sim.period_jitter = 0.0;
    sim.amp_jitter = 0.0;
    sim.dt = 1.0;
    sim.duration = static_cast<double>(cfg.n_phases - 1);
    sim.seed = cfg.seed;
    law.signal = phase_signal(simulate(sim).v);
    return law;
}

Vec3 displacement(const PhantomConfig &cfg, const MotionLaw &law, const Vec3 &rel, std::size_t phase) {
    const double dv = (law.signal.v[phase] - law.signal.v[cfg.ref_phase]) / cfg.signal_amp;
    const double dvp = law.signal.v_prime[phase] - law.signal.v_prime[cfg.ref_phase];
    Vec3 u;
    double h = 0.0;
    for (std::size_t o = 0; o < cfg.organs.size(); ++o) {
        const double g = bump(cfg.organs[o].shape, rel);
        u += law.peak_coef[o] * (g * dv);
        h += law.hyst_coef[o] * g;
    }
    return u + cfg.hysteresis_direction * (cfg.hysteresis * h * dvp);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double intensity(const PhantomConfig &cfg, const Vec3 &rel, double eps) {
    double value = cfg.background;
    value += sigmoid(signed_distance(cfg.body, rel) / eps) * (cfg.body.intensity - value);
    for (const auto &o : cfg.organs) {
        value += sigmoid(signed_distance(o.shape, rel) / eps) * (o.shape.intensity - value);
    }
    return value;
}

GridMeta phantom_grid(const PhantomConfig &cfg) {
    GridMeta m;
    m.dims = cfg.dims;
    m.spacing = cfg.spacing;
    m.origin = {0.0, 0.0, 0.0};
    return m;
}

// Every organ's bounding box (plus motion) must stay inside the grid under the perturbation.
void check_inside(const PhantomConfig &cfg, const Perturbation &p, bool as_config_error) {
    const GridMeta m = phantom_grid(cfg);
    const Vec3 half{0.5 * (m.dims[0] - 1) * m.spacing.x, 0.5 * (m.dims[1] - 1) * m.spacing.y,
                    0.5 * (m.dims[2] - 1) * m.spacing.z};
    double motion = 0.0;
    for (const auto &o : cfg.organs) {
        motion = std::max(motion, norm(o.peak));
    }
    auto check = [&](const Ellipsoid &e, const std::string &name) {
        for (int a = 0; a < 3; ++a) {
            const double reach = std::abs(p.scale) * (std::abs(e.center[a]) + e.radii[a] + motion) +
                                 std::abs(p.translation[a]);
            if (reach > half[a]) {
                const std::string msg = name + " leaves the grid along axis " + std::to_string(a);
                if (as_config_error) {
                    throw InvalidConfig("phantom: " + msg);
                }
                throw OutOfGrid("perturb_patient: " + msg);
            }
        }
    };
    for (const auto &o : cfg.organs) {
        check(o.shape, o.name);
    }
}

PhantomTruth build(const PhantomConfig &cfg, const Perturbation &pert) {
    const MotionLaw law = motion_law(cfg);
    const GridMeta meta = phantom_grid(cfg);
    const Vec3 c = meta.center();
    const double eps = 0.5 * cfg.edge_width * std::min({cfg.spacing.x, cfg.spacing.y, cfg.spacing.z});
    const auto nph = static_cast<std::size_t>(cfg.n_phases);

    PhantomTruth truth;
    truth.cfg = cfg;
    truth.anatomy = pert;
    truth.dataset.patient_id = cfg.patient_id;
    truth.dataset.ref_phase = cfg.ref_phase;
    truth.dataset.signal = law.signal;
    truth.true_masks.resize(nph);

    for (std::size_t j = 0; j < nph; ++j) {
        ScalarVolume img(meta);
        DisplacementField field(meta);
        std::map<std::string, MaskVolume> masks;
        masks.emplace("body", MaskVolume(meta));
        for (const auto &o : cfg.organs) {
            masks.emplace(o.name, MaskVolume(meta));
        }
        for_each_voxel(meta, [&](int i, int jj, int k, std::size_t n) {
            // base-anatomy coordinates of this voxel, relative to the grid center
            const Vec3 rel = (meta.world(i, jj, k) - c - pert.translation) * (1.0 / pert.scale);
            const Vec3 u = displacement(cfg, law, rel, j);
            const Vec3 moved = rel + u;
            field.u[n] = u * pert.scale;
            img.values[n] = intensity(cfg, moved, eps);
            masks["body"].labels[n] = normalized_radius(cfg.body, moved) <= 1.0 ? 1 : 0;
            for (const auto &o : cfg.organs) {
                masks[o.name].labels[n] = normalized_radius(o.shape, moved) <= 1.0 ? 1 : 0;
            }
        });
        truth.dataset.phases.push_back(std::move(img));
        truth.true_fields.push_back(std::move(field));
        truth.true_masks[j] = std::move(masks);
    }
    // the reference phase is exact identity regardless of rounding in the motion law
    truth.true_fields[cfg.ref_phase] = DisplacementField(meta);
    truth.dataset.masks = truth.true_masks[cfg.ref_phase];
    return truth;
}

json ellipsoid_json(const Ellipsoid &e) {
    return {{"center", {e.center.x, e.center.y, e.center.z}},
            {"radii", {e.radii.x, e.radii.y, e.radii.z}},
            {"intensity", e.intensity}};
}

Vec3 vec_from(const json &j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

Ellipsoid ellipsoid_from(const json &j) {
    return {vec_from(j.at("center")), vec_from(j.at("radii")), j.at("intensity").get<double>()};
}

} // namespace

std::vector<PhantomOrgan> PhantomConfig::default_organs() {
    return {
        {"liver", {{-10.0, 0.0, -22.0}, {30.0, 24.0, 18.0}, 0.8}, {0.0, 0.0, 4.0}},
        {"right_lung", {{-20.0, 0.0, 20.0}, {17.0, 20.0, 22.0}, 0.1}, {0.0, 0.0, 3.0}},
        {"left_lung", {{20.0, 0.0, 19.0}, {16.0, 19.0, 22.0}, 0.1}, {0.0, 0.0, 3.0}},
    };
}

void PhantomConfig::set_amplitude(double liver_peak_mm) {
    double liver = 0.0;
    for (const auto &o : organs) {
        if (o.name == "liver") {
            liver = norm(o.peak);
        }
    }
    if (liver <= 0.0) {
        throw InvalidConfig("set_amplitude: phantom has no moving liver");
    }
    for (auto &o : organs) {
        o.peak *= liver_peak_mm / liver;
    }
}

void PhantomConfig::validate() const {
    GridMeta m = phantom_grid(*this);
    try {
        m.validate();
    } catch (const InvalidDims &e) {
        throw InvalidConfig(std::string("phantom: ") + e.what());
    }
    if (n_phases < 2 || ref_phase >= static_cast<std::size_t>(n_phases)) {
        throw InvalidConfig("phantom: need n_phases >= 2 and ref_phase < n_phases");
    }
    if (!(signal_amp > 0.0) || signal_amp > kMaxVolumeMl) {
        throw InvalidConfig("phantom: signal_amp must be in (0, 1200] ml");
    }
    if (!(edge_width > 0.0)) {
        throw InvalidConfig("phantom: edge_width must be > 0");
    }
    const Vec3 ext = m.extent();
    const double limit = 0.1 * std::min({ext.x, ext.y, ext.z});
    for (const auto &o : organs) {
        if (norm(o.peak) > limit) {
            throw InvalidConfig("phantom: peak displacement of " + o.name + " exceeds 10% of the grid extent");
        }
        if (!(o.shape.radii.x > 0.0 && o.shape.radii.y > 0.0 && o.shape.radii.z > 0.0)) {
            throw InvalidConfig("phantom: organ radii must be positive");
        }
    }
    check_inside(*this, Perturbation{}, true);
}

PhantomConfig phantom_config_from_json(const json &doc) {
    PhantomConfig cfg;
    try {
        if (doc.contains("patient_id")) cfg.patient_id = doc.at("patient_id").get<std::string>();
        if (doc.contains("dims")) {
            for (int a = 0; a < 3; ++a) cfg.dims[a] = doc.at("dims").at(a).get<int>();
        }
        if (doc.contains("spacing")) cfg.spacing = vec_from(doc.at("spacing"));
        if (doc.contains("background")) cfg.background = doc.at("background").get<double>();
        if (doc.contains("body")) cfg.body = ellipsoid_from(doc.at("body"));
        if (doc.contains("organs")) {
            cfg.organs.clear();
            for (const auto &o : doc.at("organs")) {
                cfg.organs.push_back({o.at("name").get<std::string>(), ellipsoid_from(o), vec_from(o.at("peak"))});
            }
        }
        if (doc.contains("hysteresis")) cfg.hysteresis = doc.at("hysteresis").get<double>();
        if (doc.contains("hysteresis_direction")) cfg.hysteresis_direction = vec_from(doc.at("hysteresis_direction"));
        if (doc.contains("n_phases")) cfg.n_phases = doc.at("n_phases").get<int>();
        if (doc.contains("ref_phase")) cfg.ref_phase = doc.at("ref_phase").get<std::size_t>();
        if (doc.contains("signal_amp")) cfg.signal_amp = doc.at("signal_amp").get<double>();
        if (doc.contains("edge_width")) cfg.edge_width = doc.at("edge_width").get<double>();
        if (doc.contains("seed")) cfg.seed = doc.at("seed").get<std::uint64_t>();
    } catch (const json::exception &e) {
        throw InvalidConfig(std::string("malformed phantom config: ") + e.what());
    }
    return cfg;
}

json phantom_config_to_json(const PhantomConfig &cfg) {
    json organs = json::array();
    for (const auto &o : cfg.organs) {
        json e = ellipsoid_json(o.shape);
        e["name"] = o.name;
        e["peak"] = {o.peak.x, o.peak.y, o.peak.z};
        organs.push_back(e);
    }
    return {
        {"patient_id", cfg.patient_id},
        {"dims", {cfg.dims[0], cfg.dims[1], cfg.dims[2]}},
        {"spacing", {cfg.spacing.x, cfg.spacing.y, cfg.spacing.z}},
        {"background", cfg.background},
        {"body", ellipsoid_json(cfg.body)},
        {"organs", organs},
        {"hysteresis", cfg.hysteresis},
        {"hysteresis_direction", {cfg.hysteresis_direction.x, cfg.hysteresis_direction.y, cfg.hysteresis_direction.z}},
        {"n_phases", cfg.n_phases},
        {"ref_phase", cfg.ref_phase},
        {"signal_amp", cfg.signal_amp},
        {"edge_width", cfg.edge_width},
        {"seed", cfg.seed},
    };
}

PhantomTruth generate(const PhantomConfig &cfg) {
    cfg.validate();
    return build(cfg, Perturbation{});
}

PhantomTruth perturb_patient(const PhantomTruth &truth, const Perturbation &p) {
    if (!(p.scale > 0.0)) {
        throw InvalidConfig("perturb_patient: scale must be > 0");
    }
    // compose x -> c + s2 (c + s1 (x - c) + t1 - c) + t2
    Perturbation combined;
    combined.scale = p.scale * truth.anatomy.scale;
    combined.translation = truth.anatomy.translation * p.scale + p.translation;
    check_inside(truth.cfg, combined, false);
    if (combined.scale == truth.anatomy.scale && combined.translation == truth.anatomy.translation) {
        return truth;
    }
    return build(truth.cfg, combined);
}

Vec3 phantom_displacement(const PhantomConfig &cfg, const Vec3 &x, std::size_t phase) {
    const MotionLaw law = motion_law(cfg);
    if (phase == cfg.ref_phase) {
        return {};
    }
    return displacement(cfg, law, x - phantom_grid(cfg).center(), phase);
}

std::vector<PopulationMember> default_population() {
    return {
        {"P1", 3.0, {{0.0, 0.0, 0.0}, 1.0}},
        {"P2", 2.0, {{2.0, -2.0, 0.0}, 1.1}},
        {"P3", 4.0, {{-2.0, 0.0, 2.0}, 0.9}},
        {"P4", 3.5, {{0.0, 2.0, -2.0}, 1.05}},
    };
}

std::vector<PhantomTruth> generate_population(const PhantomConfig &base, const std::vector<PopulationMember> &members) {
    std::vector<PhantomTruth> out;
    for (const auto &m : members) {
        PhantomConfig cfg = base;
        cfg.patient_id = m.id;
        cfg.set_amplitude(m.amplitude);
        out.push_back(perturb_patient(generate(cfg), m.perturbation));
    }
    return out;
}

fs::path save_phantom(const fs::path &dir, const PhantomTruth &truth) {
    const fs::path manifest = save_dataset(dir, truth.dataset);
    const fs::path tdir = dir / "truth";
    fs::create_directories(tdir);
    json phases = json::array();
    for (std::size_t j = 0; j < truth.true_fields.size(); ++j) {
        char name[32];
        std::snprintf(name, sizeof(name), "phase_%02zu", j);
        rvf::write(tdir / (std::string(name) + "_field.rvf"), truth.true_fields[j]);
        json masks = json::object();
        for (const auto &[organ, mask] : truth.true_masks[j]) {
            const std::string file = std::string(name) + "_mask_" + organ + ".rvf";
            rvf::write(tdir / file, mask);
            masks[organ] = file;
        }
        phases.push_back({{"index", j}, {"field", std::string(name) + "_field.rvf"}, {"masks", masks}});
    }
    const json doc = {
        {"schema", "phantom-truth-1"},
        {"config", phantom_config_to_json(truth.cfg)},
        {"perturbation",
         {{"translation", {truth.anatomy.translation.x, truth.anatomy.translation.y, truth.anatomy.translation.z}},
          {"scale", truth.anatomy.scale}}},
        {"phases", phases},
    };
    std::ofstream out(tdir / "truth.json", std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + (tdir / "truth.json").string());
    }
    out << doc.dump(2) << "\n";
    return manifest;
}

} // namespace respmodel
