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

#include "pcpr/encoding.h"

#include <algorithm>
#include <numeric>

#include "json.hpp"

namespace pcpr {

const char* EncodingKindName(EncodingKind kind) {
  switch (kind) {
    case EncodingKind::kCpr:
      return "cpr";
    case EncodingKind::kTargetEncoding:
      return "target";
    case EncodingKind::kOneHot:
      return "onehot";
    case EncodingKind::kLabel:
      return "label";
  }
  return "?";
}

EncodingKind ParseEncodingKind(const std::string& name) {
  if (name == "cpr") return EncodingKind::kCpr;
  if (name == "target") return EncodingKind::kTargetEncoding;
  if (name == "onehot") return EncodingKind::kOneHot;
  if (name == "label") return EncodingKind::kLabel;
  throw ConfigError("unknown encoding '" + name + "'");
}

std::int64_t BlockWidth(EncodingKind kind, int num_classes, std::int64_t cardinality) {
  switch (kind) {
    case EncodingKind::kCpr:
    case EncodingKind::kTargetEncoding:
      return num_classes;
    case EncodingKind::kOneHot:
      return cardinality;
    case EncodingKind::kLabel:
      return 1;
  }
  return 0;
}

// ---------------------------------------------------------------------------

CprTable::CprTable(std::vector<int> columns, std::vector<std::int64_t> cardinalities,
                   int num_classes, double alpha)
    : columns_(std::move(columns)), num_classes_(num_classes), alpha_(alpha) {
  if (columns_.size() != cardinalities.size()) {
    throw ShapeError("CprTable: one cardinality per column required");
  }
  if (num_classes_ <= 0) throw Error("CprTable: num_classes must be positive");
  if (!(alpha_ >= 0.0)) throw ConfigError("CprTable: alpha must be >= 0");
  for (std::int64_t k : cardinalities) {
    counts_.emplace_back(static_cast<std::size_t>(k * num_classes_), 0);
    totals_.emplace_back(static_cast<std::size_t>(k), 0);
  }
}

std::span<const std::int64_t> CprTable::counts(std::size_t block, int value) const {
  const auto& c = counts_.at(block);
  return {c.data() + static_cast<std::size_t>(value) * num_classes_,
          static_cast<std::size_t>(num_classes_)};
}

std::int64_t CprTable::total(std::size_t block, int value) const {
  return totals_.at(block).at(value);
}

void CprTable::Probabilities(std::size_t block, int value, std::span<double> out) const {
  const auto& totals = totals_.at(block);
  if (value < 0 || static_cast<std::size_t>(value) >= totals.size()) {
    throw Error("category index " + std::to_string(value) + " out of domain of column " +
                std::to_string(columns_[block]));
  }
  const double denom = static_cast<double>(totals[value]) + num_classes_ * alpha_;
  const std::int64_t* c = counts_[block].data() + static_cast<std::size_t>(value) * num_classes_;
  if (denom <= 0.0) {
    std::fill(out.begin(), out.end(), 1.0 / num_classes_);
    return;
  }
  for (int k = 0; k < num_classes_; ++k) {
    out[k] = (static_cast<double>(c[k]) + alpha_) / denom;
  }
}

std::int64_t CprTable::observations() const {
  std::int64_t sum = 0;
  for (const auto& t : totals_) sum = std::accumulate(t.begin(), t.end(), sum);
  return sum;
}

void CprTable::Add(std::size_t block, int value, int label, std::int64_t amount) {
  if (label < 0 || label >= num_classes_) {
    throw Error("label " + std::to_string(label) + " outside [0, " +
                std::to_string(num_classes_) + ")");
  }
  auto& totals = totals_.at(block);
  if (value < 0 || static_cast<std::size_t>(value) >= totals.size()) {
    throw Error("category index " + std::to_string(value) + " out of domain");
  }
  if (amount < 0) throw Error("negative count increment");
  counts_[block][static_cast<std::size_t>(value) * num_classes_ + label] += amount;
  totals[value] += amount;
}

void CprTable::Merge(const CprTable& other) {
  if (other.columns_ != columns_ || other.num_classes_ != num_classes_ ||
      other.counts_.size() != counts_.size()) {
    throw ShapeError("CprTable::Merge: layout mismatch");
  }
  for (std::size_t b = 0; b < counts_.size(); ++b) {
    if (other.counts_[b].size() != counts_[b].size()) {
      throw ShapeError("CprTable::Merge: cardinality mismatch");
    }
    for (std::size_t i = 0; i < counts_[b].size(); ++i) counts_[b][i] += other.counts_[b][i];
    for (std::size_t i = 0; i < totals_[b].size(); ++i) totals_[b][i] += other.totals_[b][i];
  }
}

namespace {

void CheckLabelsAligned(const IndexList& rows, const LabelVector& labels) {
  if (rows.size() != labels.size()) {
    throw ShapeError("one label per row required (" + std::to_string(rows.size()) +
                     " rows, " + std::to_string(labels.size()) + " labels)");
  }
}

void Accumulate(CprTable& table, const TabularDataset& ds, const IndexList& rows,
                const LabelVector& labels) {
  CheckLabelsAligned(rows, labels);
  for (std::size_t b = 0; b < table.num_blocks(); ++b) {
    const int m = table.columns()[b];
    for (std::size_t i = 0; i < rows.size(); ++i) {
      table.Add(b, ds.category(rows[i], m), labels[i]);
    }
  }
}

std::vector<std::int64_t> Cardinalities(const TabularDataset& ds,
                                        const std::vector<int>& columns) {
  std::vector<std::int64_t> out;
  for (int m : columns) out.push_back(*ds.column(m).cardinality());
  return out;
}

}  // namespace

CprTable FitCpr(const TabularDataset& ds, const IndexList& rows,
                const LabelVector& labels, double alpha) {
  const std::vector<int> columns = ds.categorical_columns();
  CprTable table(columns, Cardinalities(ds, columns), ds.num_classes(), alpha);
  Accumulate(table, ds, rows, labels);
  return table;
}

CprTable UpdateCounts(const CprTable& table, const TabularDataset& ds,
                      const IndexList& rows, const LabelVector& labels) {
  CprTable out = table;
  Accumulate(out, ds, rows, labels);
  return out;
}

// ---------------------------------------------------------------------------

TargetEncodingTable::TargetEncodingTable(CprTable counts, double smoothing, bool scalar)
    : counts_(std::move(counts)), smoothing_(smoothing), scalar_(scalar) {
  if (!(smoothing_ >= 0.0)) throw ConfigError("target encoding smoothing must be >= 0");
  const int c = counts_.num_classes();
  prior_.assign(c, 0.0);
  // Every block sees each fitted row once, so block 0 carries the class
  // frequencies; without categorical columns the prior stays uniform.
  std::int64_t n = 0;
  if (counts_.num_blocks() > 0) {
    for (std::int64_t v = 0; v < counts_.cardinality(0); ++v) {
      const auto row = counts_.counts(0, static_cast<int>(v));
      for (int k = 0; k < c; ++k) prior_[k] += static_cast<double>(row[k]);
      n += counts_.total(0, static_cast<int>(v));
    }
  }
  for (double& p : prior_) p = n > 0 ? p / static_cast<double>(n) : 1.0 / c;
}

void TargetEncodingTable::Encode(std::size_t block, int value, std::span<double> out) const {
  if (value < 0 || value >= counts_.cardinality(block)) {
    throw Error("category index " + std::to_string(value) + " out of domain");
  }
  const int c = counts_.num_classes();
  const auto row = counts_.counts(block, value);
  const double n = static_cast<double>(counts_.total(block, value));
  const double denom = n + smoothing_;
  if (scalar_) {
    double prior_mean = 0.0, sum = 0.0;
    for (int k = 0; k < c; ++k) {
      prior_mean += k * prior_[k];
      sum += k * static_cast<double>(row[k]);
    }
    out[0] = denom > 0.0 ? (sum + smoothing_ * prior_mean) / denom : prior_mean;
    return;
  }
  for (int k = 0; k < c; ++k) {
    out[k] = denom > 0.0 ? (static_cast<double>(row[k]) + smoothing_ * prior_[k]) / denom
                         : prior_[k];
  }
}

TargetEncodingTable FitTargetEncoding(const TabularDataset& ds, const IndexList& rows,
                                      const LabelVector& labels, double smoothing,
                                      bool scalar) {
  return TargetEncodingTable(FitCpr(ds, rows, labels, 0.0), smoothing, scalar);
}

OneHotEncoding OneHotEncoding::ForDataset(const TabularDataset& ds) {
  OneHotEncoding out;
  out.columns = ds.categorical_columns();
  out.cardinalities = Cardinalities(ds, out.columns);
  return out;
}

LabelEncoding LabelEncoding::ForDataset(const TabularDataset& ds) {
  return LabelEncoding{ds.categorical_columns()};
}

EncodingKind KindOf(const EncodingTable& table) {
  return static_cast<EncodingKind>(table.index());
}

EncodingTable FitEncoding(EncodingKind kind, const TabularDataset& ds,
                          const IndexList& rows, const LabelVector& labels,
                          const EncodingParams& params) {
  switch (kind) {
    case EncodingKind::kCpr:
      return FitCpr(ds, rows, labels, params.cpr_alpha);
    case EncodingKind::kTargetEncoding:
      return FitTargetEncoding(ds, rows, labels, params.te_smoothing, params.te_scalar);
    case EncodingKind::kOneHot:
      return OneHotEncoding::ForDataset(ds);
    case EncodingKind::kLabel:
      return LabelEncoding::ForDataset(ds);
  }
  throw Error("unreachable");
}

// ---------------------------------------------------------------------------

namespace {

const std::vector<int>& TableColumns(const EncodingTable& table) {
  return std::visit(
      [](const auto& t) -> const std::vector<int>& {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, TargetEncodingTable>) {
          return t.counts().columns();
        } else if constexpr (std::is_same_v<T, CprTable>) {
          return t.columns();
        } else {
          return t.columns;
        }
      },
      table);
}

std::int64_t TableBlockWidth(const EncodingTable& table, std::size_t block) {
  return std::visit(
      [block](const auto& t) -> std::int64_t {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, CprTable>) {
          return t.num_classes();
        } else if constexpr (std::is_same_v<T, TargetEncodingTable>) {
          return t.block_width();
        } else if constexpr (std::is_same_v<T, OneHotEncoding>) {
          return t.cardinalities[block];
        } else {
          return 1;
        }
      },
      table);
}

// Calls emit(column_offset, value) for every non-zero output of one categorical
// cell; dense encodings emit every entry.
template <typename Emit>
void EncodeCell(const EncodingTable& table, std::size_t block, int value,
                std::span<double> scratch, Emit&& emit) {
  std::visit(
      [&](const auto& t) {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, CprTable>) {
          t.Probabilities(block, value, scratch);
          for (std::size_t k = 0; k < scratch.size(); ++k) emit(k, scratch[k]);
        } else if constexpr (std::is_same_v<T, TargetEncodingTable>) {
          t.Encode(block, value, scratch);
          for (std::size_t k = 0; k < scratch.size(); ++k) emit(k, scratch[k]);
        } else if constexpr (std::is_same_v<T, OneHotEncoding>) {
          if (value < 0 || value >= t.cardinalities[block]) {
            throw Error("category index " + std::to_string(value) + " out of domain");
          }
          emit(static_cast<std::size_t>(value), 1.0);
        } else {
          emit(0, static_cast<double>(value));
        }
      },
      table);
}

void CheckCompatible(const TabularDataset& ds, const EncodingTable& table) {
  const std::vector<int>& columns = TableColumns(table);
  if (columns != ds.categorical_columns()) {
    throw ShapeError("encoding table was fitted on an incompatible schema");
  }
  for (std::size_t b = 0; b < columns.size(); ++b) {
    const std::int64_t k = *ds.column(columns[b]).cardinality();
    const bool ok = std::visit(
        [&](const auto& t) {
          using T = std::decay_t<decltype(t)>;
          if constexpr (std::is_same_v<T, CprTable>) {
            return t.cardinality(b) == k;
          } else if constexpr (std::is_same_v<T, TargetEncodingTable>) {
            return t.counts().cardinality(b) == k;
          } else if constexpr (std::is_same_v<T, OneHotEncoding>) {
            return t.cardinalities[b] == k;
          } else {
            return true;
          }
        },
        table);
    if (!ok) throw ShapeError("encoding table cardinality mismatch");
  }
}

}  // namespace

std::vector<FeatureBlock> EncodedLayout(const TabularDataset& ds,
                                        const EncodingTable& table) {
  CheckCompatible(ds, table);
  std::vector<FeatureBlock> blocks;
  std::int64_t offset = 0;
  std::size_t cat_block = 0;
  for (int m = 0; m < ds.num_columns(); ++m) {
    FeatureBlock block{m, offset, 1, ds.column(m).is_categorical()};
    if (block.categorical) block.width = TableBlockWidth(table, cat_block++);
    offset += block.width;
    blocks.push_back(block);
  }
  return blocks;
}

EncodedMatrix Encode(const TabularDataset& ds, const IndexList& rows,
                     const EncodingTable& table) {
  EncodedMatrix out;
  out.blocks = EncodedLayout(ds, table);
  const std::int64_t width = out.blocks.empty()
                                 ? 0
                                 : out.blocks.back().offset + out.blocks.back().width;
  out.values = Matrix::Zero(static_cast<Eigen::Index>(rows.size()), width);
  std::vector<double> scratch(ds.num_classes());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    std::size_t cat_block = 0;
    for (const FeatureBlock& block : out.blocks) {
      if (!block.categorical) {
        out.values(row, block.offset) = ds.value(rows[i], block.source_column);
        continue;
      }
      EncodeCell(table, cat_block++, ds.category(rows[i], block.source_column),
                 std::span<double>(scratch.data(), std::min<std::size_t>(
                                                       scratch.size(), block.width)),
                 [&](std::size_t k, double v) {
                   out.values(row, block.offset + static_cast<Eigen::Index>(k)) = v;
                 });
    }
  }
  return out;
}

SparseEncodedMatrix EncodeSparse(const TabularDataset& ds, const IndexList& rows,
                                 const EncodingTable& table) {
  SparseEncodedMatrix out;
  out.blocks = EncodedLayout(ds, table);
  const std::int64_t width = out.blocks.empty()
                                 ? 0
                                 : out.blocks.back().offset + out.blocks.back().width;
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(rows.size() * out.blocks.size());
  std::vector<double> scratch(ds.num_classes());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int row = static_cast<int>(i);
    std::size_t cat_block = 0;
    for (const FeatureBlock& block : out.blocks) {
      if (!block.categorical) {
        triplets.emplace_back(row, static_cast<int>(block.offset),
                              ds.value(rows[i], block.source_column));
        continue;
      }
      EncodeCell(table, cat_block++, ds.category(rows[i], block.source_column),
                 std::span<double>(scratch.data(), std::min<std::size_t>(
                                                       scratch.size(), block.width)),
                 [&](std::size_t k, double v) {
                   triplets.emplace_back(row, static_cast<int>(block.offset + k), v);
                 });
    }
  }
  out.values.resize(static_cast<Eigen::Index>(rows.size()), width);
  out.values.setFromTriplets(triplets.begin(), triplets.end());
  return out;
}

// ---------------------------------------------------------------------------

std::string CprTableToJson(const CprTable& table) {
  nlohmann::json j;
  j["format"] = "pcpr.cpr_table";
  j["version"] = 1;
  j["num_classes"] = table.num_classes();
  j["alpha"] = table.alpha();
  j["columns"] = nlohmann::json::array();
  for (std::size_t b = 0; b < table.num_blocks(); ++b) {
    nlohmann::json col;
    col["column"] = table.columns()[b];
    col["cardinality"] = table.cardinality(b);
    // Only observed values are listed: {"value": [counts...]}.
    nlohmann::json values = nlohmann::json::object();
    for (std::int64_t v = 0; v < table.cardinality(b); ++v) {
      if (table.total(b, static_cast<int>(v)) == 0) continue;
      const auto c = table.counts(b, static_cast<int>(v));
      values[std::to_string(v)] = std::vector<std::int64_t>(c.begin(), c.end());
    }
    col["counts"] = std::move(values);
    j["columns"].push_back(std::move(col));
  }
  return j.dump();
}

CprTable CprTableFromJson(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  if (j.value("format", "") != "pcpr.cpr_table" || j.value("version", 0) != 1) {
    throw Error("not a version-1 CPR table document");
  }
  std::vector<int> columns;
  std::vector<std::int64_t> cards;
  for (const auto& col : j.at("columns")) {
    columns.push_back(col.at("column").get<int>());
    cards.push_back(col.at("cardinality").get<std::int64_t>());
  }
  const int c = j.at("num_classes").get<int>();
  CprTable table(columns, cards, c, j.at("alpha").get<double>());
  std::size_t b = 0;
  for (const auto& col : j.at("columns")) {
    for (const auto& [key, counts] : col.at("counts").items()) {
      const int v = std::stoi(key);
      const auto values = counts.get<std::vector<std::int64_t>>();
      if (static_cast<int>(values.size()) != c) throw Error("CPR table: bad count vector");
      for (int k = 0; k < c; ++k) {
        table.Add(b, v, k, values[k]);
      }
    }
    ++b;
  }
  return table;
}

}  // namespace pcpr
