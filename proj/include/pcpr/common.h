/*
 * Copyright 2026 The pcpr Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef PCPR_COMMON_H_
#define PCPR_COMMON_H_

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace pcpr {

inline constexpr const char* kVersion = "0.3.0";

// Row-major so that gathering a minibatch of rows is a contiguous copy.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

using RowIndex = std::int64_t;
using IndexList = std::vector<RowIndex>;
using LabelVector = std::vector<int>;

// Label value used for rows whose class is unknown (hidden or not yet
// pseudo-labeled).
inline constexpr int kNoLabel = -1;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid user-provided configuration. Maps to CLI exit code 1.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Dimension or schema mismatch between arguments.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf encountered during training or a solver failed to converge.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Copies the given rows of `source` into a new matrix, in order.
Matrix GatherRows(const Matrix& source, const IndexList& rows);
SparseMatrix GatherRows(const SparseMatrix& source, const IndexList& rows);

// Labels of `rows` taken from a full-length label vector.
LabelVector GatherLabels(const LabelVector& labels, const IndexList& rows);

}  // namespace pcpr

#endif  // PCPR_COMMON_H_
