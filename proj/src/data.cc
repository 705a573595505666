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

#include "pcpr/data.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include "pcpr/random.h"

namespace pcpr {

const char* ColumnKindName(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::kCategorical:
      return "categorical";
    case ColumnKind::kNumerical:
      return "numerical";
    case ColumnKind::kDate:
      return "date";
  }
  return "?";
}

ColumnKind ParseColumnKind(const std::string& name) {
  if (name == "categorical") return ColumnKind::kCategorical;
  if (name == "numerical") return ColumnKind::kNumerical;
  if (name == "date") return ColumnKind::kDate;
  throw ConfigError("unknown column kind '" + name + "'");
}

std::optional<std::int64_t> ColumnSchema::cardinality() const {
  if (!is_categorical()) return std::nullopt;
  return static_cast<std::int64_t>(domain.size());
}

TabularDataset::TabularDataset(std::vector<ColumnSchema> schema,
                               Eigen::MatrixXd cells, LabelVector labels,
                               int num_classes,
                               std::vector<std::string> class_names)
    : schema_(std::move(schema)),
      cells_(std::move(cells)),
      labels_(std::move(labels)),
      num_classes_(num_classes),
      class_names_(std::move(class_names)) {
  if (cells_.cols() != static_cast<Eigen::Index>(schema_.size())) {
    throw ShapeError("dataset has " + std::to_string(cells_.cols()) +
                     " cell columns but " + std::to_string(schema_.size()) +
                     " schema columns");
  }
  if (!labels_.empty() &&
      static_cast<std::int64_t>(labels_.size()) != cells_.rows()) {
    throw ShapeError("label vector length does not match row count");
  }
  if (num_classes_ < 0) throw Error("negative class count");
  if (class_names_.empty()) {
    for (int c = 0; c < num_classes_; ++c) {
      class_names_.push_back("class_" + std::to_string(c));
    }
  } else if (static_cast<int>(class_names_.size()) != num_classes_) {
    throw ShapeError("class name count does not match num_classes");
  }
  for (std::size_t n = 0; n < labels_.size(); ++n) {
    if (labels_[n] < 0 || labels_[n] >= num_classes_) {
      throw Error("label " + std::to_string(labels_[n]) + " at row " +
                  std::to_string(n) + " outside [0, " +
                  std::to_string(num_classes_) + ")");
    }
  }
  for (int m = 0; m < num_columns(); ++m) {
    const ColumnSchema& col = schema_[m];
    if (!col.is_categorical()) {
      if (!col.domain.empty()) {
        throw Error("non-categorical column '" + col.name + "' has a domain");
      }
      continue;
    }
    std::unordered_set<std::string> seen(col.domain.begin(), col.domain.end());
    if (seen.size() != col.domain.size()) {
      throw Error("column '" + col.name + "' domain has duplicates");
    }
    const double k = static_cast<double>(col.domain.size());
    for (Eigen::Index n = 0; n < cells_.rows(); ++n) {
      const double v = cells_(n, m);
      if (!(v >= 0.0 && v < k) || v != std::floor(v)) {
        throw Error("categorical cell (" + std::to_string(n) + ", '" +
                    col.name + "') = " + std::to_string(v) +
                    " outside domain of size " + std::to_string(col.domain.size()));
      }
    }
  }
}

std::vector<int> TabularDataset::categorical_columns() const {
  std::vector<int> out;
  for (int m = 0; m < num_columns(); ++m) {
    if (schema_[m].is_categorical()) out.push_back(m);
  }
  return out;
}

std::vector<int> TabularDataset::numeric_columns() const {
  std::vector<int> out;
  for (int m = 0; m < num_columns(); ++m) {
    if (!schema_[m].is_categorical()) out.push_back(m);
  }
  return out;
}

TabularDataset TabularDataset::WithCells(Eigen::MatrixXd cells) const {
  return TabularDataset(schema_, std::move(cells), labels_, num_classes_,
                        class_names_);
}

// ---------------------------------------------------------------------------

ScalerState FitScaler(const TabularDataset& ds, const IndexList& rows) {
  if (rows.empty()) throw Error("FitScaler: empty row list");
  ScalerState state;
  state.columns = ds.numeric_columns();
  const double n = static_cast<double>(rows.size());
  for (int m : state.columns) {
    double sum = 0.0;
    for (RowIndex r : rows) sum += ds.value(r, m);
    const double mean = sum / n;
    double sq = 0.0;
    for (RowIndex r : rows) {
      const double d = ds.value(r, m) - mean;
      sq += d * d;
    }
    double stddev = std::sqrt(sq / n);
    // A constant column maps to zero.
    if (stddev == 0.0) stddev = 1.0;
    state.mean.push_back(mean);
    state.stddev.push_back(stddev);
  }
  return state;
}

namespace {

void CheckScalerSchema(const TabularDataset& ds, const ScalerState& scaler) {
  if (scaler.columns != ds.numeric_columns() ||
      scaler.mean.size() != scaler.columns.size() ||
      scaler.stddev.size() != scaler.columns.size()) {
    throw ShapeError("scaler was fitted on an incompatible schema");
  }
}

}  // namespace

TabularDataset ApplyScaler(const TabularDataset& ds, const ScalerState& scaler) {
  CheckScalerSchema(ds, scaler);
  Eigen::MatrixXd cells = ds.cells();
  for (std::size_t i = 0; i < scaler.columns.size(); ++i) {
    cells.col(scaler.columns[i]) =
        (cells.col(scaler.columns[i]).array() - scaler.mean[i]) / scaler.stddev[i];
  }
  return ds.WithCells(std::move(cells));
}

TabularDataset InvertScaler(const TabularDataset& ds, const ScalerState& scaler) {
  CheckScalerSchema(ds, scaler);
  Eigen::MatrixXd cells = ds.cells();
  for (std::size_t i = 0; i < scaler.columns.size(); ++i) {
    cells.col(scaler.columns[i]) =
        cells.col(scaler.columns[i]).array() * scaler.stddev[i] + scaler.mean[i];
  }
  return ds.WithCells(std::move(cells));
}

// ---------------------------------------------------------------------------

IndexList DataSplit::train() const {
  IndexList out = labeled;
  out.insert(out.end(), unlabeled.begin(), unlabeled.end());
  std::sort(out.begin(), out.end());
  return out;
}

DataSplit MakeSplit(const TabularDataset& ds, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) ||
      !(spec.labeled_fraction_of_train > 0.0 &&
        spec.labeled_fraction_of_train < 1.0)) {
    throw ConfigError("split fractions must lie strictly inside (0, 1)");
  }
  if (!ds.has_labels()) {
    throw Error("MakeSplit: dataset has no labels");
  }
  const std::int64_t n = ds.num_rows();
  const auto n_test = static_cast<std::int64_t>(
      std::llround((1.0 - spec.train_fraction) * static_cast<double>(n)));
  const std::int64_t n_train = n - n_test;
  const auto n_labeled = static_cast<std::int64_t>(std::llround(
      spec.labeled_fraction_of_train * static_cast<double>(n_train)));
  if (n_test <= 0 || n_train <= 0 || n_labeled <= 0 || n_labeled >= n_train) {
    throw ConfigError("split of " + std::to_string(n) +
                      " rows produces an empty partition");
  }

  Rng rng(DeriveSeed(spec.seed, "split"));
  const IndexList perm = Permutation(n, rng);
  DataSplit split;
  split.test.assign(perm.begin(), perm.begin() + n_test);
  const IndexList train(perm.begin() + n_test, perm.end());

  const int num_classes = ds.num_classes();
  std::vector<IndexList> by_class(num_classes);
  for (RowIndex r : train) by_class[ds.label(r)].push_back(r);
  split.stratified = std::all_of(by_class.begin(), by_class.end(),
                                 [](const IndexList& l) { return !l.empty(); });

  std::vector<char> is_labeled(n, 0);
  if (split.stratified) {
    // Largest-remainder allocation of the labeled budget across classes.
    std::vector<std::int64_t> quota(num_classes);
    std::vector<double> remainder(num_classes);
    std::int64_t assigned = 0;
    for (int c = 0; c < num_classes; ++c) {
      const double exact = spec.labeled_fraction_of_train *
                           static_cast<double>(by_class[c].size());
      quota[c] = static_cast<std::int64_t>(std::floor(exact));
      remainder[c] = exact - static_cast<double>(quota[c]);
      assigned += quota[c];
    }
    std::vector<int> order(num_classes);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return remainder[a] > remainder[b]; });
    for (int i = 0; assigned < n_labeled; i = (i + 1) % num_classes) {
      const int c = order[i];
      if (quota[c] < static_cast<std::int64_t>(by_class[c].size())) {
        ++quota[c];
        ++assigned;
      }
    }
    for (int c = 0; c < num_classes; ++c) {
      for (std::int64_t i = 0; i < quota[c]; ++i) is_labeled[by_class[c][i]] = 1;
    }
  } else {
    for (std::int64_t i = 0; i < n_labeled; ++i) is_labeled[train[i]] = 1;
  }
  for (RowIndex r : train) {
    (is_labeled[r] ? split.labeled : split.unlabeled).push_back(r);
  }
  std::sort(split.labeled.begin(), split.labeled.end());
  std::sort(split.unlabeled.begin(), split.unlabeled.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

// ---------------------------------------------------------------------------
// Cache format: magic, format version, then schema, labels and cells in
// native little-endian layout.

namespace {

constexpr char kCacheMagic[8] = {'P', 'C', 'P', 'R', 'D', 'S', '\0', '\0'};
constexpr std::uint32_t kCacheVersion = 1;

template <typename T>
void WritePod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T ReadPod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw Error("dataset cache truncated");
  return value;
}

void WriteString(std::ostream& out, const std::string& s) {
  WritePod<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string ReadString(std::istream& in) {
  const auto size = ReadPod<std::uint64_t>(in);
  std::string s(size, '\0');
  in.read(s.data(), static_cast<std::streamsize>(size));
  if (!in) throw Error("dataset cache truncated");
  return s;
}

}  // namespace

void SaveDatasetCache(const TabularDataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write dataset cache '" + path + "'");
  out.write(kCacheMagic, sizeof(kCacheMagic));
  WritePod(out, kCacheVersion);
  WritePod<std::uint64_t>(out, static_cast<std::uint64_t>(ds.num_rows()));
  WritePod<std::uint32_t>(out, static_cast<std::uint32_t>(ds.num_columns()));
  for (const ColumnSchema& col : ds.schema()) {
    WritePod<std::uint8_t>(out, static_cast<std::uint8_t>(col.kind));
    WriteString(out, col.name);
    WritePod<std::uint64_t>(out, col.domain.size());
    for (const std::string& v : col.domain) WriteString(out, v);
  }
  WritePod<std::uint32_t>(out, static_cast<std::uint32_t>(ds.num_classes()));
  for (const std::string& name : ds.class_names()) WriteString(out, name);
  WritePod<std::uint8_t>(out, ds.has_labels() ? 1 : 0);
  for (int label : ds.labels()) WritePod<std::int32_t>(out, label);
  out.write(reinterpret_cast<const char*>(ds.cells().data()),
            static_cast<std::streamsize>(ds.cells().size() * sizeof(double)));
  if (!out) throw Error("failed writing dataset cache '" + path + "'");
}

TabularDataset LoadDatasetCache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read dataset cache '" + path + "'");
  char magic[sizeof(kCacheMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCacheMagic, sizeof(magic)) != 0) {
    throw Error("'" + path + "' is not a dataset cache");
  }
  const auto version = ReadPod<std::uint32_t>(in);
  if (version != kCacheVersion) {
    throw Error("unsupported dataset cache version " + std::to_string(version));
  }
  const auto rows = ReadPod<std::uint64_t>(in);
  const auto cols = ReadPod<std::uint32_t>(in);
  std::vector<ColumnSchema> schema(cols);
  for (ColumnSchema& col : schema) {
    const auto kind = ReadPod<std::uint8_t>(in);
    if (kind > static_cast<std::uint8_t>(ColumnKind::kDate)) {
      throw Error("corrupt column kind in dataset cache");
    }
    col.kind = static_cast<ColumnKind>(kind);
    col.name = ReadString(in);
    col.domain.resize(ReadPod<std::uint64_t>(in));
    for (std::string& v : col.domain) v = ReadString(in);
  }
  const auto num_classes = ReadPod<std::uint32_t>(in);
  std::vector<std::string> class_names(num_classes);
  for (std::string& name : class_names) name = ReadString(in);
  LabelVector labels;
  if (ReadPod<std::uint8_t>(in) != 0) {
    labels.resize(rows);
    for (int& label : labels) label = ReadPod<std::int32_t>(in);
  }
  Eigen::MatrixXd cells(static_cast<Eigen::Index>(rows), cols);
  in.read(reinterpret_cast<char*>(cells.data()),
          static_cast<std::streamsize>(cells.size() * sizeof(double)));
  if (!in) throw Error("dataset cache truncated");
  return TabularDataset(std::move(schema), std::move(cells), std::move(labels),
                        static_cast<int>(num_classes), std::move(class_names));
}

}  // namespace pcpr
