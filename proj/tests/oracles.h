// Independent reference implementations used only by tests.
#ifndef PCPR_TESTS_ORACLES_H_
#define PCPR_TESTS_ORACLES_H_

#include <cstdint>
#include <vector>

#include "pcpr/data.h"
#include "pcpr/encoding.h"
#include "pcpr/random.h"

namespace pcpr::testing {

// counts[block][v][c] by scanning all rows once per (value, class) pair.
inline std::vector<std::vector<std::vector<std::int64_t>>> BruteForceCounts(
    const TabularDataset& ds, const IndexList& rows, const LabelVector& labels) {
  std::vector<std::vector<std::vector<std::int64_t>>> out;
  for (int m : ds.categorical_columns()) {
    const auto k = *ds.column(m).cardinality();
    std::vector<std::vector<std::int64_t>> col(k, std::vector<std::int64_t>(ds.num_classes(), 0));
    for (std::int64_t v = 0; v < k; ++v) {
      for (int c = 0; c < ds.num_classes(); ++c) {
        for (std::size_t i = 0; i < rows.size(); ++i) {
          if (ds.category(rows[i], m) == v && labels[i] == c) ++col[v][c];
        }
      }
    }
    out.push_back(std::move(col));
  }
  return out;
}

// Random categorical dataset; labels uniform (not tied to features).
inline TabularDataset RandomCategoricalDataset(Rng& rng, std::int64_t max_rows, int max_cols,
                                               int max_card, int max_classes) {
  const std::int64_t n = 1 + UniformIndex(rng, max_rows);
  const int cols = 1 + static_cast<int>(UniformIndex(rng, max_cols));
  const int classes = 2 + static_cast<int>(UniformIndex(rng, max_classes - 1));
  std::vector<ColumnSchema> schema;
  Eigen::MatrixXd cells(n, cols);
  for (int m = 0; m < cols; ++m) {
    const bool categorical = m == 0 || UniformIndex(rng, 4) != 0;
    ColumnSchema col{"c" + std::to_string(m),
                     categorical ? ColumnKind::kCategorical : ColumnKind::kNumerical, {}};
    if (categorical) {
      const int k = 1 + static_cast<int>(UniformIndex(rng, max_card));
      for (int v = 0; v < k; ++v) col.domain.push_back("v" + std::to_string(v));
      for (std::int64_t r = 0; r < n; ++r) cells(r, m) = static_cast<double>(UniformIndex(rng, k));
    } else {
      for (std::int64_t r = 0; r < n; ++r) cells(r, m) = StandardNormal(rng);
    }
    schema.push_back(std::move(col));
  }
  LabelVector labels(n);
  for (auto& y : labels) y = static_cast<int>(UniformIndex(rng, classes));
  return TabularDataset(std::move(schema), std::move(cells), std::move(labels), classes);
}

}  // namespace pcpr::testing

#endif  // PCPR_TESTS_ORACLES_H_
