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

#include <stdexcept>
#include <string>

namespace respmodel {

/// Base of all library errors. The category decides the CLI exit code.
class Error : public std::runtime_error {
public:
    enum class Category { io, numerical, validation };

    Error(Category category, const std::string &what)
        : std::runtime_error(what), category_(category) {}

    Category category() const noexcept { return category_; }

private:
    Category category_;
};

class IoError : public Error {
public:
    explicit IoError(const std::string &what) : Error(Category::io, what) {}
};

class NumericalError : public Error {
public:
    explicit NumericalError(const std::string &what) : Error(Category::numerical, what) {}
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string &what) : Error(Category::validation, what) {}
};

// Numerical failures.
class NonConvergence : public NumericalError {
    using NumericalError::NumericalError;
};
class NonFiniteEnergy : public NumericalError {
    using NumericalError::NumericalError;
};

// Contract violations on inputs.
class GridMismatch : public ValidationError {
    using ValidationError::ValidationError;
};
class ShapeMismatch : public ValidationError {
    using ValidationError::ValidationError;
};
class InvalidDims : public ValidationError {
    using ValidationError::ValidationError;
};
class InvalidConfig : public ValidationError {
    using ValidationError::ValidationError;
};
class EmptyList : public ValidationError {
    using ValidationError::ValidationError;
};
class TooShort : public ValidationError {
    using ValidationError::ValidationError;
};
class IndexOutOfRange : public ValidationError {
    using ValidationError::ValidationError;
};
class InconsistentPhaseCount : public ValidationError {
    using ValidationError::ValidationError;
};
class TooFewPatients : public ValidationError {
    using ValidationError::ValidationError;
};
class OutOfGrid : public ValidationError {
    using ValidationError::ValidationError;
};

} // namespace respmodel
