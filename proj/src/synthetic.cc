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

// Synthetic classification tables with high-cardinality categorical columns.
//
// Every value v of categorical column m carries a latent class distribution
// theta[m][v] = softmax(signal_strength * g), g ~ N(0, I_C). A row draws one
// value per column, then its label from prod_m theta[m][v_m] (renormalized),
// then each numerical column from N(mu[label][j], 1) with
// mu ~ numeric_separation * tanh(signal_strength) * N(0, 1).

#include <algorithm>
#include <cmath>

#include "pcpr/data.h"
#include "pcpr/random.h"

namespace pcpr {
namespace {

// Cumulative distribution over category values.
std::vector<double> ValueCdf(int cardinality, double zipf_exponent) {
  std::vector<double> cdf(cardinality);
  double total = 0.0;
  for (int v = 0; v < cardinality; ++v) {
    total += zipf_exponent > 0.0 ? std::pow(v + 1.0, -zipf_exponent) : 1.0;
    cdf[v] = total;
  }
  for (double& c : cdf) c /= total;
  return cdf;
}

int DrawFromCdf(const std::vector<double>& cdf, Rng& rng) {
  const double u = Uniform01(rng);
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  return static_cast<int>(std::min<std::ptrdiff_t>(it - cdf.begin(),
                                                   static_cast<std::ptrdiff_t>(cdf.size()) - 1));
}

}  // namespace

TabularDataset SynthesizeDataset(const SyntheticSpec& spec) {
  if (spec.n_rows <= 0 || spec.n_cat_cols < 0 || spec.n_num_cols < 0 ||
      spec.n_cat_cols + spec.n_num_cols == 0 || spec.n_classes < 2 ||
      spec.signal_strength < 0.0 || spec.zipf_exponent < 0.0) {
    throw ConfigError("invalid synthetic dataset sizes");
  }
  if (spec.n_cat_cols > 0 && spec.cardinality < spec.n_classes) {
    throw ConfigError("synthetic cardinality must be >= n_classes");
  }
  const int num_classes = spec.n_classes;

  Rng param_rng(DeriveSeed(spec.seed, "synthetic-params"));
  // log theta[m][v][c]
  std::vector<std::vector<std::vector<double>>> log_theta(spec.n_cat_cols);
  for (auto& column : log_theta) {
    column.resize(spec.cardinality);
    for (auto& value : column) {
      value.resize(num_classes);
      double max_logit = -INFINITY;
      for (double& g : value) {
        g = spec.signal_strength * StandardNormal(param_rng);
        max_logit = std::max(max_logit, g);
      }
      double norm = 0.0;
      for (double g : value) norm += std::exp(g - max_logit);
      const double log_norm = max_logit + std::log(norm);
      for (double& g : value) g -= log_norm;
    }
  }
  std::vector<std::vector<double>> means(num_classes,
                                         std::vector<double>(spec.n_num_cols));
  const double mean_scale = spec.numeric_separation * std::tanh(spec.signal_strength);
  for (auto& row : means) {
    for (double& mu : row) mu = mean_scale * StandardNormal(param_rng);
  }

  const std::vector<double> cdf = ValueCdf(spec.cardinality, spec.zipf_exponent);
  const int m_total = spec.n_cat_cols + spec.n_num_cols;
  Eigen::MatrixXd cells(spec.n_rows, m_total);
  LabelVector labels(spec.n_rows);
  Rng row_rng(DeriveSeed(spec.seed, "synthetic-rows"));
  std::vector<double> log_p(num_classes);
  for (std::int64_t n = 0; n < spec.n_rows; ++n) {
    std::fill(log_p.begin(), log_p.end(), 0.0);
    for (int m = 0; m < spec.n_cat_cols; ++m) {
      const int v = DrawFromCdf(cdf, row_rng);
      cells(n, m) = v;
      for (int c = 0; c < num_classes; ++c) log_p[c] += log_theta[m][v][c];
    }
    const double max_lp = *std::max_element(log_p.begin(), log_p.end());
    double total = 0.0;
    for (double& lp : log_p) {
      lp = std::exp(lp - max_lp);
      total += lp;
    }
    double u = Uniform01(row_rng) * total;
    int label = num_classes - 1;
    for (int c = 0; c < num_classes; ++c) {
      if (u < log_p[c]) {
        label = c;
        break;
      }
      u -= log_p[c];
    }
    labels[n] = label;
    for (int j = 0; j < spec.n_num_cols; ++j) {
      cells(n, spec.n_cat_cols + j) = means[label][j] + StandardNormal(row_rng);
    }
  }

  std::vector<ColumnSchema> schema;
  for (int m = 0; m < spec.n_cat_cols; ++m) {
    ColumnSchema col{"cat_" + std::to_string(m), ColumnKind::kCategorical, {}};
    col.domain.reserve(spec.cardinality);
    for (int v = 0; v < spec.cardinality; ++v) {
      col.domain.push_back("c" + std::to_string(m) + "_" + std::to_string(v));
    }
    schema.push_back(std::move(col));
  }
  for (int j = 0; j < spec.n_num_cols; ++j) {
    schema.push_back({"num_" + std::to_string(j), ColumnKind::kNumerical, {}});
  }
  return TabularDataset(std::move(schema), std::move(cells), std::move(labels),
                        num_classes);
}

SyntheticSpec SyntheticPreset(const std::string& name, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.seed = seed;
  spec.n_cat_cols = 4;
  spec.n_num_cols = 2;
  spec.n_classes = 4;
  spec.signal_strength = 2.5;
  spec.numeric_separation = 1.5;
  if (name == "small") {
    spec.n_rows = 2000;
    spec.cardinality = 50;
  } else if (name == "medium") {
    spec.n_rows = 20000;
    spec.cardinality = 500;
  } else if (name == "highcard") {
    spec.n_rows = 50000;
    spec.cardinality = 5000;
  } else {
    throw ConfigError("unknown synthetic preset '" + name + "'");
  }
  return spec;
}

}  // namespace pcpr
