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

#ifndef PCPR_ENCODING_H_
#define PCPR_ENCODING_H_

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "pcpr/common.h"
#include "pcpr/data.h"

namespace pcpr {

enum class EncodingKind { kCpr, kTargetEncoding, kOneHot, kLabel };

const char* EncodingKindName(EncodingKind kind);
EncodingKind ParseEncodingKind(const std::string& name);

// Output width of one categorical column: C for CPR and (per-class) target
// encoding, K_m for one-hot, 1 for label encoding.
std::int64_t BlockWidth(EncodingKind kind, int num_classes, std::int64_t cardinality);

// Per categorical column, the (value, class) co-occurrence counts. Counts are
// exact integers; probabilities are derived on read as
// (counts + alpha) / (total + C * alpha), falling back to the uniform 1/C when
// that denominator is zero.
class CprTable {
 public:
  CprTable() = default;
  CprTable(std::vector<int> columns, std::vector<std::int64_t> cardinalities,
           int num_classes, double alpha);

  int num_classes() const { return num_classes_; }
  double alpha() const { return alpha_; }
  // Dataset column index of each block.
  const std::vector<int>& columns() const { return columns_; }
  std::size_t num_blocks() const { return columns_.size(); }
  std::int64_t cardinality(std::size_t block) const {
    return static_cast<std::int64_t>(totals_.at(block).size());
  }

  std::span<const std::int64_t> counts(std::size_t block, int value) const;
  std::int64_t total(std::size_t block, int value) const;
  void Probabilities(std::size_t block, int value, std::span<double> out) const;

  // Total number of (row, column) observations accumulated.
  std::int64_t observations() const;

  // Records `amount` (value, label) observations in `block`.
  void Add(std::size_t block, int value, int label, std::int64_t amount = 1);
  // Accumulates every count of `other`, which must share the layout.
  void Merge(const CprTable& other);

  bool operator==(const CprTable& other) const = default;

 private:
  std::vector<int> columns_;
  int num_classes_ = 0;
  double alpha_ = 0.0;
  // counts_[block][value * C + c]
  std::vector<std::vector<std::int64_t>> counts_;
  std::vector<std::vector<std::int64_t>> totals_;
};

// Counts over `rows`; labels[i] is the class of rows[i].
CprTable FitCpr(const TabularDataset& ds, const IndexList& rows,
                const LabelVector& labels, double alpha = 1.0);

// Pure: returns `table` plus the co-occurrences of the new rows. Equivalent to
// FitCpr on the union when the row sets are disjoint.
CprTable UpdateCounts(const CprTable& table, const TabularDataset& ds,
                      const IndexList& rows, const LabelVector& labels);

// Smoothed per-category target statistics shrunk toward the global prior with
// weight count / (count + smoothing).
class TargetEncodingTable {
 public:
  TargetEncodingTable() = default;
  TargetEncodingTable(CprTable counts, double smoothing, bool scalar);

  const CprTable& counts() const { return counts_; }
  double smoothing() const { return smoothing_; }
  // Scalar variant: one output per column, the smoothed mean class index.
  bool scalar() const { return scalar_; }
  const std::vector<double>& global_prior() const { return prior_; }
  int block_width() const { return scalar_ ? 1 : counts_.num_classes(); }

  void Encode(std::size_t block, int value, std::span<double> out) const;

  bool operator==(const TargetEncodingTable& other) const = default;

 private:
  CprTable counts_;
  double smoothing_ = 0.0;
  bool scalar_ = false;
  std::vector<double> prior_;
};

TargetEncodingTable FitTargetEncoding(const TabularDataset& ds, const IndexList& rows,
                                      const LabelVector& labels, double smoothing,
                                      bool scalar = false);

struct OneHotEncoding {
  std::vector<int> columns;
  std::vector<std::int64_t> cardinalities;
  static OneHotEncoding ForDataset(const TabularDataset& ds);
};

struct LabelEncoding {
  std::vector<int> columns;
  static LabelEncoding ForDataset(const TabularDataset& ds);
};

using EncodingTable =
    std::variant<CprTable, TargetEncodingTable, OneHotEncoding, LabelEncoding>;

EncodingKind KindOf(const EncodingTable& table);

struct EncodingParams {
  double cpr_alpha = 1.0;
  double te_smoothing = 10.0;
  bool te_scalar = false;
};

// Fits the table of the requested kind from labeled rows.
EncodingTable FitEncoding(EncodingKind kind, const TabularDataset& ds,
                          const IndexList& rows, const LabelVector& labels,
                          const EncodingParams& params);

struct FeatureBlock {
  int source_column = 0;
  std::int64_t offset = 0;
  std::int64_t width = 0;
  bool categorical = false;
};

struct EncodedMatrix {
  Matrix values;
  std::vector<FeatureBlock> blocks;
};

struct SparseEncodedMatrix {
  SparseMatrix values;
  std::vector<FeatureBlock> blocks;
};

// Output layout in schema order: numeric columns are one pass-through column
// each, categorical columns a block of BlockWidth columns.
std::vector<FeatureBlock> EncodedLayout(const TabularDataset& ds,
                                        const EncodingTable& table);

EncodedMatrix Encode(const TabularDataset& ds, const IndexList& rows,
                     const EncodingTable& table);
// Same values as Encode, stored sparse; intended for one-hot at high K.
SparseEncodedMatrix EncodeSparse(const TabularDataset& ds, const IndexList& rows,
                                 const EncodingTable& table);

// JSON round trip of count tables (column -> value -> integer counts).
std::string CprTableToJson(const CprTable& table);
CprTable CprTableFromJson(const std::string& json);

}  // namespace pcpr

#endif  // PCPR_ENCODING_H_
