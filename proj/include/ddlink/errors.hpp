// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ddlink {

/// Incompatible operand dimensions or an ill-formed shape.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numeric evaluation produced NaN/Inf or violated a numeric guard.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Matrix inversion hit a pivot below the singularity tolerance.
class SingularMatrixError : public NumericError {
public:
    SingularMatrixError(std::size_t pivot_index, double pivot_magnitude)
        : NumericError("singular matrix: pivot " + std::to_string(pivot_index) +
                       " has magnitude " + std::to_string(pivot_magnitude)),
          pivot_index_(pivot_index),
          pivot_magnitude_(pivot_magnitude) {}

    std::size_t pivot_index() const { return pivot_index_; }
    double pivot_magnitude() const { return pivot_magnitude_; }

private:
    std::size_t pivot_index_;
    double pivot_magnitude_;
};

/// Invalid or inconsistent experiment/training configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// File I/O failure or a corrupt/mismatched serialized artifact.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace ddlink
