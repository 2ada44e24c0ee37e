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

#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "respmodel/grid.h"
#include "respmodel/surrogate.h"

namespace respmodel {

/// 3 x N_phases regressors, one column (v, v', 1) per phase.
struct RegressorMatrix {
    Eigen::Matrix<double, 3, Eigen::Dynamic> Z;

    Eigen::Index phases() const { return Z.cols(); }
};

/// Builds Z from the surrogate samples; the third row is identically one.
RegressorMatrix make_regressors(const SurrogateSignal &signal);

/// Linear surrogate motion model u(x) = a1(x) v + a2(x) v' + a3(x).
struct MotionModel {
    DisplacementField a1; // [mm/ml]
    DisplacementField a2; // [mm*s/ml]
    DisplacementField a3; // [mm]

    const GridMeta &grid() const { return a3.meta; }
};

/// ser(): column j holds all x components of field j in x-fastest voxel order,
/// then all y, then all z (3 * N_vox rows).
Eigen::MatrixXd serialize_fields(std::span<const DisplacementField> fields);

/// Inverse of serialize_fields for one column.
DisplacementField deserialize_column(const Eigen::Ref<const Eigen::VectorXd> &column, const GridMeta &meta);
std::vector<DisplacementField> deserialize_fields(const Eigen::MatrixXd &V, const GridMeta &meta);

/// (Z Z^T)^+ with singular values below 1e-10 * sigma_max dropped.
struct NormalSolver {
    Eigen::Matrix3d pinv;
    int rank = 0;
};
NormalSolver normal_pseudo_inverse(const RegressorMatrix &Z);

/// Least-squares coefficients A = V Z^T (Z Z^T)^+, one row (a1, a2, a3) per row of V.
Eigen::MatrixXd solve_coefficients(const Eigen::MatrixXd &V, const RegressorMatrix &Z);

struct FitDiagnostics {
    int rank = 0;
    double residual = 0.0; // ||V - A Z||_F [mm]
    double total = 0.0;    // ||V - mean_j V||_F [mm], spread of the input fields
};

/// argmin_A ||V - A Z||_F, deserialized into the coefficient fields on `meta`.
MotionModel fit(const Eigen::MatrixXd &V, const RegressorMatrix &Z, const GridMeta &meta,
                FitDiagnostics *diagnostics = nullptr);

/// Same solution as fit(serialize_fields(fields), Z, ...) without materializing V.
MotionModel fit_fields(std::span<const DisplacementField> fields, const RegressorMatrix &Z,
                       FitDiagnostics *diagnostics = nullptr);

/// a1 v + a2 v' + a3.
DisplacementField predict(const MotionModel &model, double v, double v_prime);

/// ref_image warped by the model prediction at sample t_index of the signal.
ScalarVolume animate(const ScalarVolume &ref_image, const MotionModel &model, const SurrogateSignal &signal,
                     std::size_t t_index);

/// Model directory: a1.rvf, a2.rvf, a3.rvf and model.json.
void save_model(const std::filesystem::path &dir, const MotionModel &model);
MotionModel load_model(const std::filesystem::path &dir);

} // namespace respmodel
