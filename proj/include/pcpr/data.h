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

#ifndef PCPR_DATA_H_
#define PCPR_DATA_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pcpr/common.h"

namespace pcpr {

enum class ColumnKind { kCategorical, kNumerical, kDate };

const char* ColumnKindName(ColumnKind kind);
ColumnKind ParseColumnKind(const std::string& name);

// Reserved category that absorbs missing categorical cells.
inline constexpr const char* kMissingCategory = "__missing__";

struct ColumnSchema {
  std::string name;
  ColumnKind kind = ColumnKind::kNumerical;
  // Distinct raw values in first-occurrence order. Empty for numerical and
  // date columns.
  std::vector<std::string> domain;

  bool is_categorical() const { return kind == ColumnKind::kCategorical; }
  // K_m for categorical columns; unset otherwise.
  std::optional<std::int64_t> cardinality() const;
};

// N x M table of cells plus optional labels. Categorical cells hold the domain
// index (stored exactly in a double); numerical and date cells hold reals.
// Immutable once constructed; the constructor validates every invariant.
class TabularDataset {
 public:
  TabularDataset() = default;
  TabularDataset(std::vector<ColumnSchema> schema, Eigen::MatrixXd cells,
                 LabelVector labels, int num_classes,
                 std::vector<std::string> class_names = {});

  std::int64_t num_rows() const { return cells_.rows(); }
  int num_columns() const { return static_cast<int>(schema_.size()); }
  int num_classes() const { return num_classes_; }
  bool has_labels() const { return !labels_.empty(); }

  const std::vector<ColumnSchema>& schema() const { return schema_; }
  const ColumnSchema& column(int m) const { return schema_.at(m); }
  const Eigen::MatrixXd& cells() const { return cells_; }
  const LabelVector& labels() const { return labels_; }
  const std::vector<std::string>& class_names() const { return class_names_; }

  double value(RowIndex row, int col) const { return cells_(row, col); }
  int category(RowIndex row, int col) const {
    return static_cast<int>(cells_(row, col));
  }
  int label(RowIndex row) const { return labels_.at(row); }

  std::vector<int> categorical_columns() const;
  // Numerical and date columns; both are passed through as reals.
  std::vector<int> numeric_columns() const;

  // Copy with the numeric cells replaced; used by the scaler.
  TabularDataset WithCells(Eigen::MatrixXd cells) const;

 private:
  std::vector<ColumnSchema> schema_;
  Eigen::MatrixXd cells_;
  LabelVector labels_;
  int num_classes_ = 0;
  std::vector<std::string> class_names_;
};

// ---------------------------------------------------------------------------
// CSV ingestion.

struct CsvOptions {
  // Name of the label column. Required.
  std::string label_column;
  // Forces the kind of individual columns; others are inferred (numerical if
  // every non-empty cell parses as a number, date if every non-empty cell is
  // an ISO-8601 date, categorical otherwise).
  std::map<std::string, ColumnKind> kind_overrides;
  // When non-empty, the class list (in index order). A label outside this list
  // is an error. Otherwise classes are indexed by first occurrence.
  std::vector<std::string> class_names;
  // Columns to drop entirely.
  std::vector<std::string> ignore_columns;
};

TabularDataset LoadCsv(const std::string& path, const CsvOptions& options);
TabularDataset ParseCsv(const std::string& text, const CsvOptions& options);

// Writes the dataset with raw categorical values and a trailing label column.
void WriteCsv(const TabularDataset& ds, const std::string& path,
              const std::string& label_column = "label");

// Parses "YYYY-MM-DD" with an optional "THH:MM[:SS]" or " HH:MM[:SS]" suffix
// into fractional days since 1970-01-01.
std::optional<double> ParseDateDays(const std::string& text);

// Splits one CSV document into records of fields (RFC 4180 quoting).
std::vector<std::vector<std::string>> ParseCsvRecords(const std::string& text);

// ---------------------------------------------------------------------------
// Standard scaling of numeric columns.

struct ScalerState {
  std::vector<int> columns;
  std::vector<double> mean;
  std::vector<double> stddev;
};

ScalerState FitScaler(const TabularDataset& ds, const IndexList& rows);
TabularDataset ApplyScaler(const TabularDataset& ds, const ScalerState& scaler);
TabularDataset InvertScaler(const TabularDataset& ds, const ScalerState& scaler);

// ---------------------------------------------------------------------------
// Labeled / unlabeled / test partitioning.

struct SplitSpec {
  double train_fraction = 0.8;
  double labeled_fraction_of_train = 0.1;
  std::uint64_t seed = 0;
};

struct DataSplit {
  IndexList labeled;
  IndexList unlabeled;
  IndexList test;
  // False when some class had no training row and the labeled subset was
  // drawn by plain random sampling.
  bool stratified = true;

  IndexList train() const;
};

DataSplit MakeSplit(const TabularDataset& ds, const SplitSpec& spec);

// ---------------------------------------------------------------------------
// Synthetic high-cardinality classification data.

struct SyntheticSpec {
  std::int64_t n_rows = 2000;
  int n_cat_cols = 4;
  int cardinality = 50;
  int n_num_cols = 2;
  int n_classes = 4;
  // Sharpness of the per-category class distributions; 0 makes the label
  // independent of every feature.
  double signal_strength = 1.5;
  // Scale of the class-conditional Gaussian means of numerical columns,
  // multiplied by tanh(signal_strength).
  double numeric_separation = 0.5;
  // 0 draws category values uniformly; > 0 uses a Zipf law with this exponent.
  double zipf_exponent = 0.0;
  std::uint64_t seed = 0;
};

TabularDataset SynthesizeDataset(const SyntheticSpec& spec);

// Named presets: "small" (2k rows, K=50), "medium" (20k rows, K=500),
// "highcard" (50k rows, K=5000).
SyntheticSpec SyntheticPreset(const std::string& name, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Binary dataset cache.

void SaveDatasetCache(const TabularDataset& ds, const std::string& path);
TabularDataset LoadDatasetCache(const std::string& path);

}  // namespace pcpr

#endif  // PCPR_DATA_H_
