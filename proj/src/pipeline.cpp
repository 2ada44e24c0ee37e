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

#include "respmodel/pipeline.h"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "respmodel/atlas.h"
#include "respmodel/field_ops.h"
#include "respmodel/motion_model.h"
#include "respmodel/rvf_io.h"

namespace respmodel {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const fs::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    try {
        return json::parse(in);
    } catch (const json::exception &e) {
        throw IoError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

void write_json(const fs::path &path, const json &doc) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << doc.dump(2) << "\n";
}

RegistrationConfig overlay(const RegistrationConfig &base, const json &doc, const fs::path &base_dir) {
    json merged = registration_config_to_json(base);
    merged.merge_patch(doc);
    RegistrationConfig cfg = registration_config_from_json(merged, base_dir);
    if (!doc.contains("sliding_mask")) {
        cfg.sliding_mask = base.sliding_mask;
    }
    return cfg;
}

json vec_json(const Vec3 &v) { return {v.x, v.y, v.z}; }

Vec3 vec_from(const json &j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

json field_stats(const DisplacementField &f) {
    double sum = 0.0;
    double peak = 0.0;
    for (const Vec3 &u : f.u) {
        const double n = norm(u);
        sum += n;
        peak = std::max(peak, n);
    }
    return {{"mean_norm_mm", f.u.empty() ? 0.0 : sum / static_cast<double>(f.u.size())}, {"max_norm_mm", peak}};
}

Dataset4D load_working_dataset(const fs::path &manifest, int resolution) {
    const Dataset4D data = load_dataset(manifest);
    const GridMeta target = working_grid(data.grid(), resolution);
    return resample_dataset(data, target);
}

std::string frame_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%04zu.rvf", i);
    return buf;
}

} // namespace

void PipelineConfig::validate() const {
    if (resolution < 32 || resolution > 256 || !std::has_single_bit(static_cast<unsigned>(resolution))) {
        throw InvalidConfig("resolution must be a power of two in [32, 256], got " + std::to_string(resolution));
    }
    if (jobs < 1) {
        throw InvalidConfig("jobs must be >= 1");
    }
    if (frames < 0) {
        throw InvalidConfig("frames must be >= 0");
    }
    inter.validate();
    if (intra.regularizer != Regularizer::SMP) {
        intra.validate();
    }
    phantom.validate();
    simulation.validate();
}

PipelineConfig pipeline_config_from_json(const json &doc, const fs::path &base_dir) {
    PipelineConfig cfg;
    try {
        if (doc.contains("intra")) cfg.intra = overlay(cfg.intra, doc.at("intra"), base_dir);
        if (doc.contains("inter")) cfg.inter = overlay(cfg.inter, doc.at("inter"), base_dir);
        if (doc.contains("resolution")) cfg.resolution = doc.at("resolution").get<int>();
        if (doc.contains("out")) {
            fs::path p = doc.at("out").get<std::string>();
            cfg.out = p.is_relative() ? base_dir / p : p;
        }
        if (doc.contains("seed")) cfg.seed = doc.at("seed").get<std::uint64_t>();
        if (doc.contains("jobs")) cfg.jobs = doc.at("jobs").get<std::size_t>();
        if (doc.contains("frames")) cfg.frames = doc.at("frames").get<int>();
        if (doc.contains("simulate")) cfg.simulate = doc.at("simulate").get<bool>();
        if (doc.contains("reference")) cfg.reference = doc.at("reference").get<std::string>();
        if (doc.contains("use_true_fields")) cfg.use_true_fields = doc.at("use_true_fields").get<bool>();
        if (doc.contains("phantom")) cfg.phantom = phantom_config_from_json(doc.at("phantom"));
        if (doc.contains("population")) {
            cfg.population.clear();
            for (const auto &m : doc.at("population")) {
                PopulationMember p;
                p.id = m.at("id").get<std::string>();
                p.amplitude = m.value("amplitude", p.amplitude);
                if (m.contains("translation")) p.perturbation.translation = vec_from(m.at("translation"));
                p.perturbation.scale = m.value("scale", 1.0);
                cfg.population.push_back(p);
            }
        }
        if (doc.contains("simulation")) {
            const json &s = doc.at("simulation");
            if (s.contains("amp_range")) {
                cfg.simulation.amp_range = {s.at("amp_range").at(0).get<double>(), s.at("amp_range").at(1).get<double>()};
            }
            cfg.simulation.period_mean = s.value("period_mean", cfg.simulation.period_mean);
            cfg.simulation.period_jitter = s.value("period_jitter", cfg.simulation.period_jitter);
            cfg.simulation.amp_jitter = s.value("amp_jitter", cfg.simulation.amp_jitter);
            cfg.simulation.duration = s.value("duration", cfg.simulation.duration);
            cfg.simulation.dt = s.value("dt", cfg.simulation.dt);
        }
    } catch (const json::exception &e) {
        throw InvalidConfig(std::string("malformed pipeline config: ") + e.what());
    }
    return cfg;
}

json pipeline_config_to_json(const PipelineConfig &cfg) {
    json population = json::array();
    for (const auto &m : cfg.population) {
        population.push_back({{"id", m.id},
                              {"amplitude", m.amplitude},
                              {"translation", vec_json(m.perturbation.translation)},
                              {"scale", m.perturbation.scale}});
    }
    return {
        {"intra", registration_config_to_json(cfg.intra)},
        {"inter", registration_config_to_json(cfg.inter)},
        {"resolution", cfg.resolution},
        {"out", cfg.out.string()},
        {"seed", cfg.seed},
        {"jobs", cfg.jobs},
        {"frames", cfg.frames},
        {"simulate", cfg.simulate},
        {"reference", cfg.reference},
        {"use_true_fields", cfg.use_true_fields},
        {"phantom", phantom_config_to_json(cfg.phantom)},
        {"population", population},
        {"simulation",
         {{"amp_range", {cfg.simulation.amp_range.first, cfg.simulation.amp_range.second}},
          {"period_mean", cfg.simulation.period_mean},
          {"period_jitter", cfg.simulation.period_jitter},
          {"amp_jitter", cfg.simulation.amp_jitter},
          {"duration", cfg.simulation.duration},
          {"dt", cfg.simulation.dt}}},
    };
}

GridMeta working_grid(const GridMeta &meta, int resolution) {
    if (meta.dims == Dims{resolution, resolution, resolution}) {
        return meta;
    }
    return meta.resized({resolution, resolution, resolution});
}

fs::path cmd_phantom(const PipelineConfig &cfg) {
    cfg.validate();
    PhantomConfig base = cfg.phantom;
    const Vec3 extent{base.dims[0] * base.spacing.x, base.dims[1] * base.spacing.y, base.dims[2] * base.spacing.z};
    base.dims = {cfg.resolution, cfg.resolution, cfg.resolution};
    base.spacing = {extent.x / cfg.resolution, extent.y / cfg.resolution, extent.z / cfg.resolution};
    base.seed = cfg.seed;
    const std::vector<PhantomTruth> population = generate_population(base, cfg.population);

    fs::create_directories(cfg.out);
    json patients = json::array();
    for (std::size_t p = 0; p < population.size(); ++p) {
        const auto &member = cfg.population[p];
        const fs::path manifest = save_phantom(cfg.out / member.id, population[p]);
        patients.push_back({{"id", member.id},
                            {"manifest", fs::relative(manifest, cfg.out).generic_string()},
                            {"amplitude", member.amplitude},
                            {"translation", vec_json(member.perturbation.translation)},
                            {"scale", member.perturbation.scale}});
    }
    const fs::path out = cfg.out / "population.json";
    write_json(out, {{"schema", "population-1"}, {"seed", cfg.seed}, {"patients", patients}});
    return out;
}

fs::path cmd_fit_patient(const fs::path &manifest, const PipelineConfig &cfg) {
    cfg.validate();
    const Dataset4D data = load_working_dataset(manifest, cfg.resolution);
    const PatientMotionSet motion = estimate_patient_motion(data, cfg.intra, cfg.jobs);
    FitDiagnostics diag;
    const MotionModel model = fit_patient_model(motion, &diag);

    save_motion_set(cfg.out, motion);
    save_model(cfg.out / "model", model);
    json phases = json::array();
    for (std::size_t j = 0; j < motion.phase_fields.size(); ++j) {
        const DisplacementField pred = predict(model, motion.signal.v[j], motion.signal.v_prime[j]);
        json s = field_stats(motion.phase_fields[j]);
        s["index"] = j;
        s["fit_error_max_mm"] = max_abs_difference(pred, motion.phase_fields[j]);
        phases.push_back(s);
    }
    write_json(cfg.out / "fit_report.json", {
                                                 {"schema", "fit-report-1"},
                                                 {"patient_id", motion.patient_id},
                                                 {"seed", cfg.seed},
                                                 {"resolution", cfg.resolution},
                                                 {"rank", diag.rank},
                                                 {"residual_frobenius_mm", diag.residual},
                                                 {"total_frobenius_mm", diag.total},
                                                 {"phases", phases},
                                                 {"intra", registration_config_to_json(cfg.intra)},
                                             });
    return cfg.out;
}

fs::path cmd_build_atlas(const std::vector<fs::path> &inputs, const PipelineConfig &cfg) {
    cfg.validate();
    if (inputs.empty()) {
        throw EmptyList("atlas: no inputs");
    }
    std::vector<PatientMotionSet> patients(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (fs::is_directory(inputs[i]) && fs::exists(inputs[i] / "fit.json")) {
            patients[i] = load_motion_set(inputs[i]);
        } else {
            const Dataset4D data = load_working_dataset(inputs[i], cfg.resolution);
            patients[i] = estimate_patient_motion(data, cfg.intra, cfg.jobs);
        }
    }
    const std::string reference = cfg.reference.empty() ? patients.front().patient_id : cfg.reference;
    AtlasOptions options;
    options.jobs = cfg.jobs;
    const MeanAtlas atlas = build_mean_atlas(patients, reference, cfg.inter, options);
    save_atlas(cfg.out, atlas);
    return cfg.out;
}

fs::path cmd_transfer(const fs::path &atlas_dir, const fs::path &new_image, const PipelineConfig &cfg) {
    cfg.validate();
    const MeanAtlas atlas = load_atlas(atlas_dir);
    const ScalarVolume image = rvf::read_scalar(new_image);
    const TransferResult result = transfer_to_new(atlas, image, cfg.inter);
    fs::create_directories(cfg.out);
    save_model(cfg.out / "model", result.model);
    rvf::write(cfg.out / "atlas_to_new.rvf", result.atlas_to_new);
    write_signal_csv(cfg.out / "signal.csv", atlas.mean_signal);
    write_json(cfg.out / "transfer.json", {
                                              {"schema", "transfer-1"},
                                              {"atlas_reference", atlas.ref_patient_id},
                                              {"model", "model"},
                                              {"atlas_to_new", "atlas_to_new.rvf"},
                                              {"signal", "signal.csv"},
                                              {"rank", result.fit.rank},
                                              {"residual_frobenius_mm", result.fit.residual},
                                              {"seed", cfg.seed},
                                          });
    return cfg.out;
}

std::vector<fs::path> cmd_animate(const fs::path &model_dir, const fs::path &ref_image, const fs::path &signal_csv,
                                  const PipelineConfig &cfg) {
    cfg.validate();
    const MotionModel model = load_model(model_dir);
    ScalarVolume image = rvf::read_scalar(ref_image);
    const Vec3 a = model.grid().extent();
    const Vec3 b = image.meta.extent();
    for (int axis = 0; axis < 3; ++axis) {
        if (std::abs(a[axis] - b[axis]) > 1e-6 * std::max(a[axis], b[axis])) {
            throw GridMismatch("animate: image extent differs from the model grid");
        }
    }
    image = resample_volume(image, model.grid());

    SurrogateSignal signal;
    if (cfg.simulate) {
        SignalSimConfig sim = cfg.simulation;
        sim.seed = cfg.seed;
        signal = simulate(sim);
    } else {
        if (signal_csv.empty()) {
            throw InvalidConfig("animate: give a signal CSV or --simulate");
        }
        signal = read_signal_csv(signal_csv);
    }
    const std::size_t count =
        cfg.frames > 0 ? std::min<std::size_t>(static_cast<std::size_t>(cfg.frames), signal.size()) : signal.size();

    fs::create_directories(cfg.out);
    std::vector<fs::path> frames;
    for (std::size_t i = 0; i < count; ++i) {
        frames.push_back(cfg.out / frame_name(i));
        rvf::write(frames.back(), animate(image, model, signal, i));
    }
    write_signal_csv(cfg.out / "signal.csv", signal);
    write_json(cfg.out / "animate.json", {{"schema", "animation-1"},
                                          {"frames", count},
                                          {"simulated", cfg.simulate},
                                          {"seed", cfg.seed},
                                          {"signal", "signal.csv"}});
    return frames;
}

DiceReport cmd_evaluate(const fs::path &population_dir, const PipelineConfig &cfg) {
    cfg.validate();
    const json doc = read_json(population_dir / "population.json");
    std::vector<EvalSubject> subjects;
    try {
        for (const auto &p : doc.at("patients")) {
            EvalSubject s = load_subject(population_dir / p.at("manifest").get<std::string>());
            const GridMeta target = working_grid(s.data.grid(), cfg.resolution);
            if (!target.same_grid(s.data.grid())) {
                s.data = resample_dataset(s.data, target);
                for (auto &f : s.true_fields) {
                    f = resample_field(f, target);
                }
                for (auto &masks : s.phase_masks) {
                    for (auto &[name, m] : masks) {
                        m = resample_mask(m, target);
                    }
                }
            }
            subjects.push_back(std::move(s));
        }
    } catch (const json::exception &e) {
        throw IoError("malformed population.json: " + std::string(e.what()));
    }
    EvalConfig ec;
    ec.intra = cfg.intra;
    ec.inter = cfg.inter;
    ec.use_true_fields = cfg.use_true_fields;
    ec.jobs = cfg.jobs;
    const DiceReport report = leave_one_out(std::move(subjects), ec);
    save_dice_report(cfg.out, report);
    return report;
}

namespace {

int exit_code(const Error &e) {
    switch (e.category()) {
    case Error::Category::io:
        return 2;
    case Error::Category::numerical:
        return 3;
    case Error::Category::validation:
        return 4;
    }
    return 4;
}

} // namespace

int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
    CLI::App app{"Surrogate-driven respiratory motion models and population atlases", "respmodel"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    int resolution = 0;
    std::uint64_t seed = 0;
    std::size_t jobs = 0;
    int frames = -1;
    bool simulate = false;
    std::string reference;
    bool truth = false;

    auto common = [&](CLI::App *sub) {
        sub->add_option("--config", config_path, "Pipeline config JSON");
        sub->add_option("--out", out_dir, "Output directory");
        sub->add_option("--resolution", resolution, "Working grid edge length");
        sub->add_option("--seed", seed, "Random seed");
        sub->add_option("--jobs", jobs, "Worker thread cap");
    };

    CLI::App *phantom = app.add_subcommand("phantom", "Generate the phantom population");
    common(phantom);

    std::string manifest;
    CLI::App *fit = app.add_subcommand("fit", "Fit a patient motion model from a 4D manifest");
    common(fit);
    fit->add_option("manifest", manifest, "Dataset manifest")->required();

    std::vector<std::string> atlas_inputs;
    CLI::App *atlas = app.add_subcommand("atlas", "Build a mean motion atlas");
    common(atlas);
    atlas->add_option("inputs", atlas_inputs, "Fit directories or dataset manifests")->required();
    atlas->add_option("--reference", reference, "Reference patient id");

    std::string atlas_dir;
    std::string image_path;
    CLI::App *transfer = app.add_subcommand("transfer", "Transfer the atlas motion onto a static image");
    common(transfer);
    transfer->add_option("atlas", atlas_dir, "Atlas directory")->required();
    transfer->add_option("image", image_path, "Static RVF image")->required();

    std::string model_dir;
    std::string signal_path;
    CLI::App *animate_cmd = app.add_subcommand("animate", "Animate an image with a motion model");
    common(animate_cmd);
    animate_cmd->add_option("model", model_dir, "Model directory")->required();
    animate_cmd->add_option("image", image_path, "Reference RVF image")->required();
    animate_cmd->add_option("signal", signal_path, "Signal CSV (t_s,v_ml)");
    animate_cmd->add_flag("--simulate", simulate, "Drive with a simulated signal");
    animate_cmd->add_option("--frames", frames, "Number of frames");

    std::string population_dir;
    CLI::App *evaluate = app.add_subcommand("evaluate", "Leave-one-out DICE evaluation");
    common(evaluate);
    evaluate->add_option("population", population_dir, "Directory with population.json")->required();
    evaluate->add_flag("--true-fields", truth, "Use phantom truth instead of intra-patient registration");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError &e) {
        app.exit(e, out, err);
        return 4;
    }

    try {
        PipelineConfig cfg;
        if (!config_path.empty()) {
            cfg = pipeline_config_from_json(read_json(config_path), fs::path(config_path).parent_path());
        }
        CLI::App *sub = app.get_subcommands().front();
        if (sub->count("--out")) cfg.out = out_dir;
        if (sub->count("--resolution")) cfg.resolution = resolution;
        if (sub->count("--seed")) cfg.seed = seed;
        if (sub->count("--jobs")) cfg.jobs = jobs;
        if (simulate) cfg.simulate = true;
        if (frames >= 0) cfg.frames = frames;
        if (!reference.empty()) cfg.reference = reference;
        if (truth) cfg.use_true_fields = true;

        if (sub == phantom) {
            out << cmd_phantom(cfg).string() << "\n";
        } else if (sub == fit) {
            out << cmd_fit_patient(manifest, cfg).string() << "\n";
        } else if (sub == atlas) {
            out << cmd_build_atlas({atlas_inputs.begin(), atlas_inputs.end()}, cfg).string() << "\n";
        } else if (sub == transfer) {
            out << cmd_transfer(atlas_dir, image_path, cfg).string() << "\n";
        } else if (sub == animate_cmd) {
            out << cmd_animate(model_dir, image_path, signal_path, cfg).size() << " frames written to "
                << cfg.out.string() << "\n";
        } else if (sub == evaluate) {
            write_dice_table(out, cmd_evaluate(population_dir, cfg));
        }
    } catch (const Error &e) {
        err << "error: " << e.what() << "\n";
        return exit_code(e);
    } catch (const fs::filesystem_error &e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception &e) {
        err << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}

} // namespace respmodel
