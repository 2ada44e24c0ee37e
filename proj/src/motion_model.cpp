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

#include "respmodel/motion_model.h"

#include <cmath>
#include <fstream>
#include <iostream>

#include "json.hpp"
#include "respmodel/errors.h"
#include "respmodel/field_ops.h"
#include "respmodel/rvf_io.h"

namespace respmodel {

namespace {

// Coefficients for one regressand row; values(j) is the observation at phase j.
template <class Values>
Eigen::Vector3d solve_row(const NormalSolver &solver, const RegressorMatrix &Z, Values &&values) {
    Eigen::Vector3d b = Eigen::Vector3d::Zero();
    for (Eigen::Index j = 0; j < Z.phases(); ++j) {
        b += values(j) * Z.Z.col(j);
    }
    return solver.pinv * b;
}

template <class Values>
void accumulate_residual(const RegressorMatrix &Z, const Eigen::Vector3d &a, Values &&values,
                         FitDiagnostics &diag) {
    double mean = 0.0;
    for (Eigen::Index j = 0; j < Z.phases(); ++j) {
        mean += values(j);
    }
    mean /= static_cast<double>(Z.phases());
    for (Eigen::Index j = 0; j < Z.phases(); ++j) {
        const double r = values(j) - a.dot(Z.Z.col(j));
        const double d = values(j) - mean;
        diag.residual += r * r;
        diag.total += d * d;
    }
}

void warn_rank(int rank) {
    if (rank < 3) {
        std::cerr << "warning: surrogate regressors have rank " << rank
                  << " < 3; using the minimum-norm solution\n";
    }
}

void set_component(DisplacementField &f, std::size_t n, int c, double value) { f.u[n][c] = value; }

} // namespace

RegressorMatrix make_regressors(const SurrogateSignal &signal) {
    if (signal.v.size() != signal.v_prime.size()) {
        throw ShapeMismatch("make_regressors: v and v' lengths differ");
    }
    RegressorMatrix Z;
    Z.Z.resize(3, static_cast<Eigen::Index>(signal.v.size()));
    for (std::size_t j = 0; j < signal.v.size(); ++j) {
        Z.Z.col(static_cast<Eigen::Index>(j)) << signal.v[j], signal.v_prime[j], 1.0;
    }
    if (Z.phases() < 3) {
        std::cerr << "warning: fewer than 3 phases, the motion model is underdetermined\n";
    }
    return Z;
}

Eigen::MatrixXd serialize_fields(std::span<const DisplacementField> fields) {
    if (fields.empty()) {
        throw EmptyList("serialize_fields: no fields");
    }
    const GridMeta &meta = fields.front().meta;
    const auto nvox = static_cast<Eigen::Index>(meta.voxel_count());
    Eigen::MatrixXd V(3 * nvox, static_cast<Eigen::Index>(fields.size()));
    for (std::size_t j = 0; j < fields.size(); ++j) {
        require_same_grid(meta, fields[j].meta, "serialize_fields");
        const auto col = static_cast<Eigen::Index>(j);
        for (Eigen::Index n = 0; n < nvox; ++n) {
            const Vec3 &u = fields[j].u[static_cast<std::size_t>(n)];
            V(n, col) = u.x;
            V(nvox + n, col) = u.y;
            V(2 * nvox + n, col) = u.z;
        }
    }
    return V;
}

DisplacementField deserialize_column(const Eigen::Ref<const Eigen::VectorXd> &column, const GridMeta &meta) {
    const auto nvox = static_cast<Eigen::Index>(meta.voxel_count());
    if (column.size() != 3 * nvox) {
        throw ShapeMismatch("deserialize: column length " + std::to_string(column.size()) + " != 3 * " +
                            std::to_string(nvox));
    }
    DisplacementField f(meta);
    for (Eigen::Index n = 0; n < nvox; ++n) {
        f.u[static_cast<std::size_t>(n)] = {column(n), column(nvox + n), column(2 * nvox + n)};
    }
    return f;
}

std::vector<DisplacementField> deserialize_fields(const Eigen::MatrixXd &V, const GridMeta &meta) {
    std::vector<DisplacementField> out;
    out.reserve(static_cast<std::size_t>(V.cols()));
    for (Eigen::Index j = 0; j < V.cols(); ++j) {
        out.push_back(deserialize_column(V.col(j), meta));
    }
    return out;
}

NormalSolver normal_pseudo_inverse(const RegressorMatrix &Z) {
    const Eigen::Matrix3d gram = Z.Z * Z.Z.transpose();
    // the Gram matrix is symmetric PSD: eigenvalues are its singular values
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(gram);
    const Eigen::Vector3d sigma = eig.eigenvalues().cwiseAbs();
    const double cutoff = 1e-10 * sigma.maxCoeff();
    NormalSolver s;
    s.pinv.setZero();
    for (int i = 0; i < 3; ++i) {
        if (sigma(i) > cutoff && sigma(i) > 0.0) {
            const Eigen::Vector3d q = eig.eigenvectors().col(i);
            s.pinv += (q * q.transpose()) / eig.eigenvalues()(i);
            ++s.rank;
        }
    }
    return s;
}

Eigen::MatrixXd solve_coefficients(const Eigen::MatrixXd &V, const RegressorMatrix &Z) {
    if (V.cols() != Z.phases()) {
        throw ShapeMismatch("fit: V has " + std::to_string(V.cols()) + " columns, Z has " +
                            std::to_string(Z.phases()) + " phases");
    }
    const NormalSolver solver = normal_pseudo_inverse(Z);
    Eigen::MatrixXd A(V.rows(), 3);
    for (Eigen::Index r = 0; r < V.rows(); ++r) {
        A.row(r) = solve_row(solver, Z, [&](Eigen::Index j) { return V(r, j); }).transpose();
    }
    return A;
}

MotionModel fit(const Eigen::MatrixXd &V, const RegressorMatrix &Z, const GridMeta &meta,
                FitDiagnostics *diagnostics) {
    if (V.cols() != Z.phases()) {
        throw ShapeMismatch("fit: V has " + std::to_string(V.cols()) + " columns, Z has " +
                            std::to_string(Z.phases()) + " phases");
    }
    const auto nvox = static_cast<Eigen::Index>(meta.voxel_count());
    if (V.rows() != 3 * nvox) {
        throw ShapeMismatch("fit: V has " + std::to_string(V.rows()) + " rows, grid needs " +
                            std::to_string(3 * nvox));
    }
    const NormalSolver solver = normal_pseudo_inverse(Z);
    warn_rank(solver.rank);
    MotionModel model{DisplacementField(meta), DisplacementField(meta), DisplacementField(meta)};
    FitDiagnostics diag;
    diag.rank = solver.rank;
    for (Eigen::Index r = 0; r < V.rows(); ++r) {
        auto values = [&](Eigen::Index j) { return V(r, j); };
        const Eigen::Vector3d a = solve_row(solver, Z, values);
        const auto n = static_cast<std::size_t>(r % nvox);
        const auto c = static_cast<int>(r / nvox);
        set_component(model.a1, n, c, a(0));
        set_component(model.a2, n, c, a(1));
        set_component(model.a3, n, c, a(2));
        accumulate_residual(Z, a, values, diag);
    }
    diag.residual = std::sqrt(diag.residual);
    diag.total = std::sqrt(diag.total);
    if (diagnostics) {
        *diagnostics = diag;
    }
    return model;
}

MotionModel fit_fields(std::span<const DisplacementField> fields, const RegressorMatrix &Z,
                       FitDiagnostics *diagnostics) {
    if (fields.empty()) {
        throw EmptyList("fit: no fields");
    }
    if (static_cast<Eigen::Index>(fields.size()) != Z.phases()) {
        throw ShapeMismatch("fit: " + std::to_string(fields.size()) + " fields but " +
                            std::to_string(Z.phases()) + " surrogate phases");
    }
    const GridMeta &meta = fields.front().meta;
    for (const auto &f : fields) {
        require_same_grid(meta, f.meta, "fit");
    }
    const NormalSolver solver = normal_pseudo_inverse(Z);
    warn_rank(solver.rank);
    MotionModel model{DisplacementField(meta), DisplacementField(meta), DisplacementField(meta)};
    FitDiagnostics diag;
    diag.rank = solver.rank;
    // same row order as serialize_fields so the floating-point result is identical
    for (int c = 0; c < 3; ++c) {
        for (std::size_t n = 0; n < meta.voxel_count(); ++n) {
            auto values = [&](Eigen::Index j) { return fields[static_cast<std::size_t>(j)].u[n][c]; };
            const Eigen::Vector3d a = solve_row(solver, Z, values);
            set_component(model.a1, n, c, a(0));
            set_component(model.a2, n, c, a(1));
            set_component(model.a3, n, c, a(2));
            accumulate_residual(Z, a, values, diag);
        }
    }
    diag.residual = std::sqrt(diag.residual);
    diag.total = std::sqrt(diag.total);
    if (diagnostics) {
        *diagnostics = diag;
    }
    return model;
}

DisplacementField predict(const MotionModel &model, double v, double v_prime) {
    DisplacementField out(model.grid());
    for (std::size_t n = 0; n < out.u.size(); ++n) {
        out.u[n] = model.a1.u[n] * v + model.a2.u[n] * v_prime + model.a3.u[n];
    }
    return out;
}

ScalarVolume animate(const ScalarVolume &ref_image, const MotionModel &model, const SurrogateSignal &signal,
                     std::size_t t_index) {
    require_same_grid(ref_image.meta, model.grid(), "animate");
    if (t_index >= signal.v.size()) {
        throw IndexOutOfRange("animate: sample " + std::to_string(t_index) + " outside signal of length " +
                              std::to_string(signal.v.size()));
    }
    return warp_image(ref_image, predict(model, signal.v[t_index], signal.v_prime[t_index]));
}

void save_model(const std::filesystem::path &dir, const MotionModel &model) {
    std::filesystem::create_directories(dir);
    rvf::write(dir / "a1.rvf", model.a1);
    rvf::write(dir / "a2.rvf", model.a2);
    rvf::write(dir / "a3.rvf", model.a3);
    const GridMeta &m = model.grid();
    const nlohmann::json doc = {
        {"schema", "motionmodel-1"},
        {"grid",
         {{"dims", {m.dims[0], m.dims[1], m.dims[2]}},
          {"spacing", {m.spacing.x, m.spacing.y, m.spacing.z}},
          {"origin", {m.origin.x, m.origin.y, m.origin.z}}}},
        {"units", {{"a1", "mm/ml"}, {"a2", "mm*s/ml"}, {"a3", "mm"}}},
        {"files", {{"a1", "a1.rvf"}, {"a2", "a2.rvf"}, {"a3", "a3.rvf"}}},
    };
    std::ofstream out(dir / "model.json", std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + (dir / "model.json").string());
    }
    out << doc.dump(2) << "\n";
}

MotionModel load_model(const std::filesystem::path &dir) {
    const auto manifest = dir / "model.json";
    std::ifstream in(manifest);
    if (!in) {
        throw IoError("cannot open model manifest: " + manifest.string());
    }
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
        if (doc.at("schema").get<std::string>() != "motionmodel-1") {
            throw IoError("unsupported model schema in " + manifest.string());
        }
    } catch (const nlohmann::json::exception &e) {
        throw IoError("malformed model manifest " + manifest.string() + ": " + e.what());
    }
    MotionModel model{rvf::read_field(dir / "a1.rvf"), rvf::read_field(dir / "a2.rvf"),
                      rvf::read_field(dir / "a3.rvf")};
    require_same_grid(model.a1.meta, model.a3.meta, "load_model");
    require_same_grid(model.a2.meta, model.a3.meta, "load_model");
    return model;
}

} // namespace respmodel
