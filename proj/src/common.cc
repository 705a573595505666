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

#include "pcpr/common.h"

namespace pcpr {

Matrix GatherRows(const Matrix& source, const IndexList& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), source.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = source.row(rows[i]);
  }
  return out;
}

SparseMatrix GatherRows(const SparseMatrix& source, const IndexList& rows) {
  std::vector<Eigen::Triplet<double>> triplets;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (SparseMatrix::InnerIterator it(source, rows[i]); it; ++it) {
      triplets.emplace_back(static_cast<int>(i), static_cast<int>(it.col()), it.value());
    }
  }
  SparseMatrix out(static_cast<Eigen::Index>(rows.size()), source.cols());
  out.setFromTriplets(triplets.begin(), triplets.end());
  return out;
}

LabelVector GatherLabels(const LabelVector& labels, const IndexList& rows) {
  LabelVector out;
  out.reserve(rows.size());
  for (RowIndex r : rows) out.push_back(labels.at(r));
  return out;
}

}  // namespace pcpr
