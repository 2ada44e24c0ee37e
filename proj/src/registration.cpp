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

#include "respmodel/registration.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "filters.h"
#include "interp.h"
#include "respmodel/field_ops.h"
#include "respmodel/rvf_io.h"

namespace respmodel {

namespace {

// Descent directions are smoothed with this Gaussian (in voxels of the current level).
constexpr double kDirectionSigma = 2.0;
constexpr int kMaxHalvings = 10;
constexpr int kStallWindow = 5;
constexpr double kStallTolerance = 1e-6;
constexpr int kMinLevelDim = 8;

// Intensity and its gradient, interpolated together.
struct Sample4 {
    double v = 0.0;
    Vec3 g;

    friend Sample4 operator*(const Sample4 &a, double s) { return {a.v * s, a.g * s}; }
    friend Sample4 operator+(const Sample4 &a, const Sample4 &b) { return {a.v + b.v, a.g + b.g}; }
};

struct Level {
    GridMeta meta;
    std::vector<double> fixed;
    std::vector<double> moving;
    std::vector<Sample4> moving_with_gradient;
    std::vector<std::uint8_t> labels; // empty unless SMP
};

Vec3 index_at(const GridMeta &m, int i, int j, int k, const Vec3 &d) {
    return {i + d.x / m.spacing.x, j + d.y / m.spacing.y, k + d.z / m.spacing.z};
}

void check_pair(const ScalarVolume &a, const ScalarVolume &b, const char *what) {
    require_same_grid(a.meta, b.meta, what);
    if (a.values.size() != a.meta.voxel_count() || b.values.size() != b.meta.voxel_count()) {
        throw ShapeMismatch(std::string(what) + ": value count does not match grid");
    }
}

double mean_squared_difference(const std::vector<double> &a, const std::vector<double> &b) {
    double sum = 0.0;
    for (std::size_t n = 0; n < a.size(); ++n) {
        const double d = a[n] - b[n];
        sum += d * d;
    }
    return sum / static_cast<double>(a.size());
}

double intensity_variance(const std::vector<double> &v) {
    double mean = 0.0;
    for (double x : v) {
        mean += x;
    }
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) {
        var += (x - mean) * (x - mean);
    }
    return var / static_cast<double>(v.size());
}

// Edge-based diffusion energy; `same_region(n, m)` selects the neighbour pairs that count.
template <class SameRegion>
RegularizerTerm diffusion(const DisplacementField &field, SameRegion &&same_region) {
    const GridMeta &m = field.meta;
    RegularizerTerm term;
    term.gradient.assign(field.u.size(), Vec3{});
    const std::size_t stride[3] = {1, static_cast<std::size_t>(m.dims[0]),
                                   static_cast<std::size_t>(m.dims[0]) * m.dims[1]};
    const double inv_h2[3] = {1.0 / (m.spacing.x * m.spacing.x), 1.0 / (m.spacing.y * m.spacing.y),
                              1.0 / (m.spacing.z * m.spacing.z)};
    for_each_voxel(m, [&](int i, int j, int k, std::size_t n) {
        const int pos[3] = {i, j, k};
        for (int a = 0; a < 3; ++a) {
            if (pos[a] + 1 >= m.dims[a]) {
                continue;
            }
            const std::size_t nb = n + stride[a];
            if (!same_region(n, nb)) {
                continue;
            }
            const Vec3 diff = field.u[nb] - field.u[n];
            term.energy += 0.5 * inv_h2[a] * (diff.x * diff.x + diff.y * diff.y + diff.z * diff.z);
            term.gradient[n] -= diff * inv_h2[a];
            term.gradient[nb] += diff * inv_h2[a];
        }
    });
    return term;
}

RegularizerTerm regularizer(const Level &level, const DisplacementField &u) {
    if (level.labels.empty()) {
        return diffusion(u, [](std::size_t, std::size_t) { return true; });
    }
    return diffusion(u, [&](std::size_t a, std::size_t b) { return level.labels[a] == level.labels[b]; });
}

struct Objective {
    double metric = 0.0;
    double total = 0.0;
};

Objective evaluate(const Level &level, const DisplacementField &u, double weight) {
    const GridMeta &m = level.meta;
    double sum = 0.0;
    for_each_voxel(m, [&](int i, int j, int k, std::size_t n) {
        const double w = detail::sample_at_index(m, level.moving.data(), index_at(m, i, j, k, u.u[n]));
        const double d = w - level.fixed[n];
        sum += d * d;
    });
    const double nvox = static_cast<double>(m.voxel_count());
    Objective o;
    o.metric = sum / nvox;
    o.total = o.metric;
    if (weight > 0.0) {
        o.total += weight * regularizer(level, u).energy / nvox;
    }
    return o;
}

std::vector<Vec3> descent_direction(const Level &level, const DisplacementField &u, double weight) {
    const GridMeta &m = level.meta;
    std::vector<Vec3> g(u.u.size());
    // voxel-count normalization is common to both terms and dropped here
    for_each_voxel(m, [&](int i, int j, int k, std::size_t n) {
        const Sample4 s = detail::sample_at_index(m, level.moving_with_gradient.data(), index_at(m, i, j, k, u.u[n]));
        g[n] = s.g * (2.0 * (s.v - level.fixed[n]));
    });
    if (weight > 0.0) {
        const RegularizerTerm r = regularizer(level, u);
        for (std::size_t n = 0; n < g.size(); ++n) {
            g[n] += r.gradient[n] * weight;
        }
    }
    if (level.labels.empty()) {
        return detail::gaussian_smooth(m, g, kDirectionSigma);
    }
    return detail::masked_gaussian_smooth(m, g, level.labels, kDirectionSigma);
}

std::vector<Level> build_pyramid(const ScalarVolume &fixed, const ScalarVolume &moving,
                                 const RegistrationConfig &cfg) {
    std::vector<Level> levels;
    Level finest;
    finest.meta = fixed.meta;
    finest.fixed = fixed.values;
    finest.moving = moving.values;
    if (cfg.regularizer == Regularizer::SMP) {
        finest.labels = resample_mask(*cfg.sliding_mask, fixed.meta).labels;
    }
    levels.push_back(std::move(finest));

    while (static_cast<int>(levels.size()) < cfg.levels) {
        const Level &prev = levels.back();
        const Dims &d = prev.meta.dims;
        if (std::min({d[0], d[1], d[2]}) < 2 * kMinLevelDim) {
            break;
        }
        const GridMeta coarse_meta = prev.meta.resized({(d[0] + 1) / 2, (d[1] + 1) / 2, (d[2] + 1) / 2});
        Level coarse;
        coarse.meta = coarse_meta;
        auto reduce = [&](const std::vector<double> &values) {
            ScalarVolume vol(prev.meta);
            vol.values = detail::box3(prev.meta, values);
            return resample_volume(vol, coarse_meta).values;
        };
        coarse.fixed = reduce(prev.fixed);
        coarse.moving = reduce(prev.moving);
        if (!prev.labels.empty()) {
            MaskVolume mask(prev.meta);
            mask.labels = prev.labels;
            coarse.labels = resample_mask(mask, coarse_meta).labels;
        }
        levels.push_back(std::move(coarse));
    }
    for (Level &level : levels) {
        const auto grad = detail::image_gradient(level.meta, level.moving);
        level.moving_with_gradient.resize(level.moving.size());
        for (std::size_t n = 0; n < grad.size(); ++n) {
            level.moving_with_gradient[n] = {level.moving[n], grad[n]};
        }
    }
    std::reverse(levels.begin(), levels.end()); // coarse to fine
    return levels;
}

void optimize_level(const Level &level, DisplacementField &u, const RegistrationConfig &cfg,
                    std::vector<double> &trace) {
    Objective current = evaluate(level, u, cfg.weight);
    if (!std::isfinite(current.total)) {
        throw NonFiniteEnergy("registration energy is not finite at level start");
    }
    const double start = current.total;
    double step = cfg.step_size;
    std::vector<double> history{current.total};
    DisplacementField trial(level.meta);

    for (int it = 0; it < cfg.iters_per_level; ++it) {
        if (current.total <= 0.0) {
            break;
        }
        const std::vector<Vec3> dir = descent_direction(level, u, cfg.weight);
        double dmax = 0.0;
        for (const Vec3 &d : dir) {
            dmax = std::max(dmax, max_abs(d));
        }
        if (!std::isfinite(dmax)) {
            throw NonFiniteEnergy("registration gradient is not finite");
        }
        if (dmax == 0.0) {
            break;
        }

        bool accepted = false;
        for (int h = 0; h <= kMaxHalvings; ++h) {
            const double scale = step / dmax;
            for (std::size_t n = 0; n < u.u.size(); ++n) {
                trial.u[n] = u.u[n] - dir[n] * scale;
            }
            const Objective o = evaluate(level, trial, cfg.weight);
            if (!std::isfinite(o.total)) {
                std::ostringstream os;
                os << "registration energy became non-finite (step " << step << " mm)";
                throw NonFiniteEnergy(os.str());
            }
            if (o.total < current.total) {
                std::swap(u.u, trial.u);
                current = o;
                accepted = true;
                if (h == 0) {
                    step = std::min(cfg.step_size, step * 1.5);
                }
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            break;
        }
        trace.push_back(current.total);
        history.push_back(current.total);
        if (history.size() > kStallWindow) {
            const double gain = history[history.size() - 1 - kStallWindow] - history.back();
            if (gain < kStallTolerance * start) {
                break;
            }
        }
    }
}

} // namespace

void RegistrationConfig::validate() const {
    if (!(weight >= 0.0) || !std::isfinite(weight)) {
        throw InvalidConfig("registration weight must be >= 0");
    }
    if (levels < 1 || iters_per_level < 1) {
        throw InvalidConfig("registration levels and iters_per_level must be >= 1");
    }
    if (!(step_size > 0.0) || !std::isfinite(step_size)) {
        throw InvalidConfig("registration step_size must be > 0");
    }
    if (regularizer == Regularizer::SMP && !sliding_mask) {
        throw InvalidConfig("SMP regularization requires a sliding mask");
    }
}

RegistrationConfig RegistrationConfig::intra_patient(std::optional<MaskVolume> sliding_mask) {
    RegistrationConfig cfg;
    cfg.metric = Metric::NSSD;
    cfg.regularizer = Regularizer::SMP;
    cfg.weight = 0.1;
    cfg.sliding_mask = std::move(sliding_mask);
    return cfg;
}

RegistrationConfig RegistrationConfig::inter_patient() {
    RegistrationConfig cfg;
    cfg.metric = Metric::SSD;
    cfg.regularizer = Regularizer::DNL;
    cfg.weight = 1.0;
    return cfg;
}

RegistrationConfig registration_config_from_json(const nlohmann::json &doc, const std::filesystem::path &base_dir) {
    RegistrationConfig cfg;
    try {
        if (doc.contains("metric")) {
            const auto m = doc.at("metric").get<std::string>();
            if (m == "NSSD") {
                cfg.metric = Metric::NSSD;
            } else if (m == "SSD") {
                cfg.metric = Metric::SSD;
            } else {
                throw InvalidConfig("unknown metric '" + m + "'");
            }
        }
        if (doc.contains("regularizer")) {
            const auto r = doc.at("regularizer").get<std::string>();
            if (r == "SMP") {
                cfg.regularizer = Regularizer::SMP;
            } else if (r == "DNL") {
                cfg.regularizer = Regularizer::DNL;
            } else {
                throw InvalidConfig("unknown regularizer '" + r + "'");
            }
        }
        if (doc.contains("weight")) {
            cfg.weight = doc.at("weight").get<double>();
        }
        if (doc.contains("levels")) {
            cfg.levels = doc.at("levels").get<int>();
        }
        if (doc.contains("iters_per_level")) {
            cfg.iters_per_level = doc.at("iters_per_level").get<int>();
        }
        if (doc.contains("step_size")) {
            cfg.step_size = doc.at("step_size").get<double>();
        }
        if (doc.contains("sliding_mask") && !doc.at("sliding_mask").is_null()) {
            std::filesystem::path p = doc.at("sliding_mask").get<std::string>();
            if (p.is_relative()) {
                p = base_dir / p;
            }
            cfg.sliding_mask = rvf::read_mask(p);
        }
    } catch (const nlohmann::json::exception &e) {
        throw InvalidConfig(std::string("malformed registration config: ") + e.what());
    }
    return cfg;
}

nlohmann::json registration_config_to_json(const RegistrationConfig &cfg,
                                           const std::optional<std::string> &sliding_mask_path) {
    nlohmann::json doc = {
        {"metric", cfg.metric == Metric::NSSD ? "NSSD" : "SSD"},
        {"regularizer", cfg.regularizer == Regularizer::SMP ? "SMP" : "DNL"},
        {"weight", cfg.weight},
        {"levels", cfg.levels},
        {"iters_per_level", cfg.iters_per_level},
        {"step_size", cfg.step_size},
    };
    doc["sliding_mask"] = sliding_mask_path ? nlohmann::json(*sliding_mask_path) : nlohmann::json(nullptr);
    return doc;
}

ScalarVolume zscore(const ScalarVolume &vol) {
    const double n = static_cast<double>(vol.values.size());
    double mean = 0.0;
    for (double v : vol.values) {
        mean += v;
    }
    mean /= n;
    double var = 0.0;
    for (double v : vol.values) {
        var += (v - mean) * (v - mean);
    }
    var /= n;
    const double sd = var > 1e-24 ? std::sqrt(var) : 1.0;
    ScalarVolume out(vol.meta);
    for (std::size_t i = 0; i < vol.values.size(); ++i) {
        out.values[i] = (vol.values[i] - mean) / sd;
    }
    return out;
}

double metric_nssd(const ScalarVolume &fixed, const ScalarVolume &warped_moving) {
    check_pair(fixed, warped_moving, "metric_nssd");
    return mean_squared_difference(zscore(fixed).values, zscore(warped_moving).values);
}

double metric_ssd(const ScalarVolume &fixed, const ScalarVolume &warped_moving) {
    check_pair(fixed, warped_moving, "metric_ssd");
    return mean_squared_difference(fixed.values, warped_moving.values);
}

RegularizerTerm reg_grad_dnl(const DisplacementField &field) {
    return diffusion(field, [](std::size_t, std::size_t) { return true; });
}

RegularizerTerm reg_grad_smp(const DisplacementField &field, const MaskVolume &mask) {
    require_same_grid(field.meta, mask.meta, "reg_grad_smp");
    return diffusion(field, [&](std::size_t a, std::size_t b) { return mask.labels[a] == mask.labels[b]; });
}

RegistrationResult register_volumes(const ScalarVolume &fixed, const ScalarVolume &moving,
                                    const RegistrationConfig &cfg) {
    check_pair(fixed, moving, "register");
    cfg.validate();

    const bool normalize = cfg.metric == Metric::NSSD;
    const ScalarVolume f = normalize ? zscore(fixed) : fixed;
    const ScalarVolume m = normalize ? zscore(moving) : moving;
    const std::vector<Level> levels = build_pyramid(f, m, cfg);

    // The regularizer is weighted in units of the fixed image's intensity variance, so SSD
    // registration does not depend on the global intensity scale (z-scored NSSD has variance 1).
    RegistrationConfig scaled = cfg;
    scaled.weight = cfg.weight * intensity_variance(f.values);

    RegistrationResult result;
    DisplacementField u(levels.front().meta);
    for (std::size_t l = 0; l < levels.size(); ++l) {
        if (l > 0) {
            u = resample_field(u, levels[l].meta);
        }
        if (l + 1 == levels.size()) {
            result.last_level_start = result.metric_trace.size();
        }
        optimize_level(levels[l], u, scaled, result.metric_trace);
    }

    auto metric = [&](const ScalarVolume &warped) {
        return normalize ? metric_nssd(fixed, warped) : metric_ssd(fixed, warped);
    };
    const double zero_metric = metric(moving);
    result.final_metric = metric(warp_image(moving, u));
    if (result.final_metric > zero_metric) {
        // never worse than not registering at all
        u = DisplacementField(fixed.meta);
        result.final_metric = zero_metric;
    }
    result.field = std::move(u);
    return result;
}

} // namespace respmodel
